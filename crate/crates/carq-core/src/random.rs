//! Seeded random constructions of unitaries, densities and projector
//! families. Every function is deterministic given the caller's RNG, so
//! repeated runs of any suite reproduce the same scenarios.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::linalg::OperatorMatrix;

/// Standard complex Gaussian matrix (Ginibre ensemble).
pub fn random_ginibre<R: Rng>(dim: usize, rng: &mut R) -> OperatorMatrix {
    use rand_distr_normal::sample_standard_normal;
    OperatorMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(sample_standard_normal(rng), sample_standard_normal(rng))
    })
}

// Box-Muller keeps the dependency surface at `rand` alone.
mod rand_distr_normal {
    use rand::Rng;

    pub fn sample_standard_normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase of
/// each diagonal of R fixed, so the result is unique given the sample.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> OperatorMatrix {
    let g = random_ginibre(dim, rng);
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let col = q.column(j) * phase;
        q.set_column(j, &col);
    }
    q
}

/// Full-rank random density operator `G G† / Tr(G G†)`.
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> OperatorMatrix {
    let g = random_ginibre(dim, rng);
    let psd = &g * g.adjoint();
    let tr = psd.trace().re;
    psd.scale(1.0 / tr)
}

/// Random probability vector with strictly positive entries.
pub fn random_probability_vector<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// Diagonal density operator with the sampled probabilities on the diagonal.
pub fn random_diagonal_density<R: Rng>(dim: usize, rng: &mut R) -> (OperatorMatrix, Vec<f64>) {
    let p = random_probability_vector(dim, rng);
    let rho = OperatorMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        p.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    (rho, p)
}

/// Rank-1 orthogonal projectors `|u_i><u_i|` onto the columns of a random
/// unitary. They sum to the identity and are mutually orthogonal.
pub fn random_rank1_projectors<R: Rng>(dim: usize, rng: &mut R) -> Vec<OperatorMatrix> {
    let u = random_unitary(dim, rng);
    (0..dim)
        .map(|i| {
            let col = u.column(i);
            col * col.adjoint()
        })
        .collect()
}

/// Uniformly random permutation of `0..dim` (Fisher-Yates).
pub fn random_permutation<R: Rng>(dim: usize, rng: &mut R) -> Vec<usize> {
    let mut sigma: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        let j = rng.gen_range(0..=i);
        sigma.swap(i, j);
    }
    sigma
}

/// Random row-stochastic matrix with strictly positive entries.
pub fn random_row_stochastic<R: Rng>(dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..dim).map(|_| random_probability_vector(dim, rng)).collect()
}

/// Density and unitary sharing a random eigenbasis, so they commute up to
/// floating-point rounding. Used by variant-agreement suites.
pub fn random_commuting_pair<R: Rng>(dim: usize, rng: &mut R) -> (OperatorMatrix, OperatorMatrix) {
    let v = random_unitary(dim, rng);
    let p = random_probability_vector(dim, rng);
    let rho_diag = OperatorMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        p.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    let phases = OperatorMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        (0..dim).map(|_| {
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            Complex64::new(t.cos(), t.sin())
        }),
    ));
    let rho = &v * rho_diag * v.adjoint();
    let u = &v * phases * v.adjoint();
    (rho, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator_max, is_density, unitarity_deviation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_unitary_is_unitary_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(4, &mut rng);
        assert!(unitarity_deviation(&u) <= 1e-12);
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let u2 = random_unitary(4, &mut rng2);
        assert_eq!(u, u2);
    }

    #[test]
    fn random_density_is_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [2, 3, 4] {
            let rho = random_density(dim, &mut rng);
            assert!(is_density(&rho, 1e-10));
        }
    }

    #[test]
    fn rank1_projectors_resolve_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let projs = random_rank1_projectors(3, &mut rng);
        let sum = projs
            .iter()
            .fold(OperatorMatrix::zeros(3, 3), |acc, p| acc + p);
        assert!(
            crate::linalg::max_abs_diff(&sum, &OperatorMatrix::identity(3, 3)) <= 1e-12
        );
        for (i, p) in projs.iter().enumerate() {
            for (j, q) in projs.iter().enumerate() {
                let prod = p * q;
                let expect = if i == j { p.clone() } else { OperatorMatrix::zeros(3, 3) };
                assert!(crate::linalg::max_abs_diff(&prod, &expect) <= 1e-12);
            }
        }
    }

    #[test]
    fn commuting_pair_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [2, 3, 4] {
            let (rho, u) = random_commuting_pair(dim, &mut rng);
            assert!(commutator_max(&rho, &u) <= 1e-13);
            assert!(is_density(&rho, 1e-10));
            assert!(unitarity_deviation(&u) <= 1e-12);
        }
    }

    #[test]
    fn stochastic_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_row_stochastic(3, &mut rng);
        for row in &t {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-15);
        }
    }
}
