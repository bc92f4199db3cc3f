//! Independent eigenvalue oracle for `hermitian_eig`.
//!
//! A complex Hermitian H = A + iB embeds into the real symmetric matrix
//! [[A, -B], [B, A]], whose spectrum is that of H with every eigenvalue
//! doubled. A self-contained cyclic Jacobi sweep diagonalizes the embedding,
//! so the comparison shares no code with the production path.

// Indexed (p, q, k) loops mirror the textbook plane-rotation update.
#![allow(clippy::needless_range_loop)]

use carq_core::linalg::{hermitian_eig, max_abs_diff, unitarity_deviation, OperatorMatrix};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi diagonalization of a real symmetric matrix.
/// Returns eigenvalues in ascending order.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        assert!(sweep < 199, "Jacobi failed to converge");
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // rows/cols p and q of J^T A J
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.
fn real_embedding(h: &OperatorMatrix) -> Vec<Vec<f64>> {
    let n = h.nrows();
    let mut m = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = h[(i, j)].re;
            m[i][j + n] = -h[(i, j)].im;
            m[i + n][j] = h[(i, j)].im;
            m[i + n][j + n] = h[(i, j)].re;
        }
    }
    m
}

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> OperatorMatrix {
    let g = OperatorMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    (&g + g.adjoint()).scale(0.5)
}

#[test]
fn eigenvalues_match_jacobi_oracle_at_dim_8() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let h = random_hermitian(8, &mut rng);
        let spec = hermitian_eig(&h).unwrap();

        let doubled = jacobi_eigenvalues(real_embedding(&h));
        assert_eq!(doubled.len(), 16);
        // each eigenvalue of H appears exactly twice in the embedding
        let oracle: Vec<f64> = doubled.iter().step_by(2).copied().collect();
        for (a, b) in spec.eigenvalues.iter().zip(oracle.iter()) {
            assert!(
                (a - b).abs() <= 1e-9,
                "eigenvalue mismatch: production {a}, oracle {b}"
            );
        }
    }
}

#[test]
fn spectrum_reconstructs_input_within_1e10() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for dim in [2, 3, 5, 8, 16] {
        let h = random_hermitian(dim, &mut rng);
        let spec = hermitian_eig(&h).unwrap();
        assert!(unitarity_deviation(&spec.eigenvectors) <= 1e-10);
        let lam = OperatorMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            dim,
            spec.eigenvalues.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        let rebuilt = &spec.eigenvectors * lam * spec.eigenvectors.adjoint();
        assert!(max_abs_diff(&rebuilt, &h) <= 1e-10);
        // ascending order
        for w in spec.eigenvalues.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }
}
