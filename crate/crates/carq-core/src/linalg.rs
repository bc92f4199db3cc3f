//! Dense complex linear algebra: tensor products, partial traces, Hermitian
//! spectra, and the two entropy functionals.
//!
//! All operators are carried as square [`OperatorMatrix`] values. Operations
//! are pure; nothing here holds shared mutable state.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex square matrix; the universal carrier for algebra elements,
/// states and unitaries. Squareness is enforced at every public entry point.
pub type OperatorMatrix = DMatrix<Complex64>;

/// Dense complex column vector carrying Hilbert-space elements.
pub type StateVector = nalgebra::DVector<Complex64>;

/// Permutation matrix `U e_c = e_{sigma[c]}`; `sigma` must be a permutation
/// of `0..len`.
pub fn permutation_matrix(sigma: &[usize]) -> Result<OperatorMatrix> {
    let dim = sigma.len();
    let mut seen = vec![false; dim];
    for &s in sigma {
        if s >= dim || seen[s] {
            return Err(Error::InvalidScenario {
                reason: format!("{sigma:?} is not a permutation of 0..{dim}"),
            });
        }
        seen[s] = true;
    }
    let mut m = OperatorMatrix::zeros(dim, dim);
    for (c, &r) in sigma.iter().enumerate() {
        m[(r, c)] = Complex64::new(1.0, 0.0);
    }
    Ok(m)
}

/// Tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-10;
/// Tolerance for density-operator checks (trace deviation and eigenvalue floor).
pub const DENSITY_TOL: f64 = 1e-10;
/// Eigenvalues in `[EIG_CLAMP_FLOOR, 0]` are clamped to 0 before `p ln p`.
pub const EIG_CLAMP_FLOOR: f64 = -1e-10;
/// Probability entries down to this floor are accepted and clamped to 0.
pub const PROB_FLOOR: f64 = -1e-12;
/// Tolerance on `sum(p) - 1` for probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-10;

/// Eigendecomposition of a Hermitian matrix: `a = V diag(λ) V†` with real
/// ascending `eigenvalues` and unitary `eigenvectors` (columns).
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: OperatorMatrix,
}

/// Returns the dimension of a square matrix, or an error naming `context`.
pub fn require_square(m: &OperatorMatrix, context: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            context,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Largest entry magnitude of `m` (0 for empty matrices).
pub fn max_abs(m: &OperatorMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entrywise magnitude of `a - b`. Panics on shape mismatch.
pub fn max_abs_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

/// Largest entry magnitude of `a - a†`; 0 exactly for Hermitian inputs.
pub fn hermitian_deviation(m: &OperatorMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest entry magnitude of `m†m - 1`.
pub fn unitarity_deviation(m: &OperatorMatrix) -> f64 {
    let dim = m.nrows();
    let gram = m.adjoint() * m;
    max_abs_diff(&gram, &OperatorMatrix::identity(dim, dim))
}

/// Largest entry magnitude of `ab - ba`.
pub fn commutator_max(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    max_abs_diff(&(a * b), &(b * a))
}

/// True iff `m` is square and Hermitian within `tol`.
pub fn is_hermitian(m: &OperatorMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_deviation(m) <= tol
}

/// True iff `m` is square and `m†m = 1` within `tol`.
pub fn is_unitary(m: &OperatorMatrix, tol: f64) -> bool {
    m.is_square() && unitarity_deviation(m) <= tol
}

/// True iff `m` is a self-adjoint idempotent within `tol`.
pub fn is_projection(m: &OperatorMatrix, tol: f64) -> bool {
    m.is_square() && hermitian_deviation(m) <= tol && max_abs_diff(&(m * m), m) <= tol
}

/// True iff `m` is Hermitian, has unit trace, and is PSD down to an
/// eigenvalue floor of `-tol`.
pub fn is_density(m: &OperatorMatrix, tol: f64) -> bool {
    density_violation(m, tol).is_none()
}

/// Names the first density-operator invariant `m` violates, if any.
/// Checked in order: squareness, Hermiticity, unit trace, PSD floor `-tol`.
pub fn density_violation(m: &OperatorMatrix, tol: f64) -> Option<String> {
    if !m.is_square() {
        return Some(format!("matrix is {}x{}, not square", m.nrows(), m.ncols()));
    }
    let herm = hermitian_deviation(m);
    if herm > tol {
        return Some(format!(
            "not Hermitian: max |a - a†| entry {herm:.3e} exceeds {tol:.1e}"
        ));
    }
    let tr = m.trace();
    let tr_dev = (tr - Complex64::new(1.0, 0.0)).norm();
    if tr_dev > tol {
        return Some(format!(
            "trace {:.12} + {:.3e}i deviates from 1 by {tr_dev:.3e}",
            tr.re, tr.im
        ));
    }
    let spec = hermitian_eig_unchecked(m);
    let min_eig = spec.eigenvalues.first().copied().unwrap_or(0.0);
    if min_eig < -tol {
        return Some(format!(
            "negative eigenvalue {min_eig:.3e} below the floor -{tol:.1e}"
        ));
    }
    None
}

/// Kronecker product `a ⊗ b`; block `(i, j)` of the result is `a[i,j] · b`.
pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right; empty input gives
/// the 1x1 identity.
pub fn kron_all(factors: &[&OperatorMatrix]) -> OperatorMatrix {
    let mut out = OperatorMatrix::identity(1, 1);
    for f in factors {
        out = kron(&out, f);
    }
    out
}

/// Partial trace of `x` over the tensor factors *not* listed in `keep`.
///
/// `dims` are the factor dimensions with factor 0 as the most significant
/// index (the [`kron`] convention); `keep` lists the factor indices to
/// retain, in their original order. Preserves the trace exactly.
pub fn partial_trace(x: &OperatorMatrix, dims: &[usize], keep: &[usize]) -> Result<OperatorMatrix> {
    let dim = require_square(x, "partial_trace input")?;
    let prod: usize = dims.iter().product();
    if prod != dim || dims.contains(&0) {
        return Err(Error::DimensionMismatch {
            context: "partial_trace factor dimensions",
            expected: dim,
            found: prod,
        });
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() || keep.iter().any(|&f| f >= dims.len()) {
        return Err(Error::DimensionMismatch {
            context: "partial_trace keep set",
            expected: dims.len(),
            found: keep.last().map_or(0, |&f| f + 1),
        });
    }

    let kept_dims: Vec<usize> = keep.iter().map(|&f| dims[f]).collect();
    let kept_dim: usize = kept_dims.iter().product();
    let traced_dim: usize = dim / kept_dim;

    // full_index[k * traced_dim + t] = composite index with kept digits k and
    // traced digits t, each in mixed radix over their factor subsets.
    let mut full_index = vec![0usize; kept_dim * traced_dim];
    for full in 0..dim {
        let mut rest = full;
        let mut kept_code = 0usize;
        let mut traced_code = 0usize;
        // decode digits most-significant first, then re-encode per subset
        let mut digits = vec![0usize; dims.len()];
        for f in (0..dims.len()).rev() {
            digits[f] = rest % dims[f];
            rest /= dims[f];
        }
        for (f, &digit) in digits.iter().enumerate() {
            if keep.binary_search(&f).is_ok() {
                kept_code = kept_code * dims[f] + digit;
            } else {
                traced_code = traced_code * dims[f] + digit;
            }
        }
        full_index[kept_code * traced_dim + traced_code] = full;
    }

    let mut out = OperatorMatrix::zeros(kept_dim, kept_dim);
    for kr in 0..kept_dim {
        for kc in 0..kept_dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_dim {
                acc += x[(full_index[kr * traced_dim + t], full_index[kc * traced_dim + t])];
            }
            out[(kr, kc)] = acc;
        }
    }
    Ok(out)
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Rejects inputs whose Hermiticity deviation exceeds [`HERMITIAN_TOL`]; the
/// accepted input is symmetrized as `(a + a†)/2` before decomposition so the
/// spectrum is exactly real.
pub fn hermitian_eig(a: &OperatorMatrix) -> Result<HermitianSpectrum> {
    require_square(a, "hermitian_eig input")?;
    let dev = hermitian_deviation(a);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: HERMITIAN_TOL,
        });
    }
    Ok(hermitian_eig_unchecked(a))
}

fn hermitian_eig_unchecked(a: &OperatorMatrix) -> HermitianSpectrum {
    let herm = (a + a.adjoint()).scale(0.5);
    let se = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let dim = a.nrows();
    let mut eigenvectors = OperatorMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &se.eigenvectors.column(src));
    }
    HermitianSpectrum {
        eigenvalues,
        eigenvectors,
    }
}

/// Von Neumann entropy `-Tr ρ ln ρ` in nats, with `0 ln 0 := 0`.
///
/// `rho` must be a density operator: Hermitian, trace 1 within
/// [`DENSITY_TOL`], PSD down to the eigenvalue floor [`EIG_CLAMP_FLOOR`].
/// Eigenvalues in the clamp window are treated as exact zeros.
pub fn von_neumann_entropy(rho: &OperatorMatrix) -> Result<f64> {
    if let Some(reason) = density_violation(rho, DENSITY_TOL) {
        return Err(Error::InvalidDensity { reason });
    }
    let spec = hermitian_eig_unchecked(rho);
    Ok(entropy_of_clamped(&spec.eigenvalues, EIG_CLAMP_FLOOR))
}

/// Shannon entropy `-Σ p ln p` in nats, with `0 ln 0 := 0`.
///
/// Entries may dip to [`PROB_FLOOR`] (clamped to 0); the sum must be 1
/// within [`PROB_SUM_TOL`].
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    for (i, &x) in p.iter().enumerate() {
        if x < PROB_FLOOR || !x.is_finite() {
            return Err(Error::InvalidProbabilities {
                reason: format!("entry {i} = {x:.6e} is below the floor {PROB_FLOOR:.1e}"),
            });
        }
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidProbabilities {
            reason: format!("sum {sum:.15} deviates from 1 by {:.3e}", (sum - 1.0).abs()),
        });
    }
    Ok(entropy_of_clamped(p, PROB_FLOOR))
}

/// `-Σ p ln p` over entries with values in `[floor, 0]` clamped to 0.
/// Shared by both entropy functionals after their own validation.
pub(crate) fn entropy_of_clamped(p: &[f64], floor: f64) -> f64 {
    debug_assert!(floor <= 0.0);
    let mut acc = 0.0;
    for &x in p {
        if x > 0.0 {
            acc -= x * x.ln();
        }
        // values in [floor, 0] contribute 0 by the 0 ln 0 convention
    }
    acc
}
