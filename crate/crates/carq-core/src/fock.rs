//! Finite-mode fermionic Fock spaces and the CAR generators.
//!
//! The primary construction is the occupation-number representation: basis
//! state `b` of the `2^m`-dimensional space encodes the occupation of mode
//! `i` as bit `i` of `b` (mode 0 least significant), states ordered by
//! ascending `b`. Annihilators carry the alternating sign
//! `(-1)^(number of occupied modes below i)`, which makes the canonical
//! anticommutation relations exact in floating point.
//!
//! The tensor-power route (permutation operators, antisymmetrizers, wedge
//! vectors) scales as `d^n` rather than `2^m` and is kept solely as a
//! cross-validation path for the occupation construction.

use std::collections::BTreeSet;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{kron, OperatorMatrix, StateVector};

/// Pass threshold for the anticommutation-relation families.
pub const CAR_TOL: f64 = 1e-12;
/// Hard cap on the mode count; keeps every matrix at most 1024x1024.
pub const MAX_MODES: usize = 10;
/// Hard cap on tensor-power dimensions `d^n` for the permutation machinery.
pub const MAX_TENSOR_DIM: usize = 4096;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Fermionic Fock space on `m` modes with the CAR generator set.
///
/// Invariants: `creators[i]` is exactly the adjoint of `annihilators[i]`,
/// and all three anticommutation-relation families hold within [`CAR_TOL`]
/// (verified at construction).
#[derive(Clone, Debug)]
pub struct FockSystem {
    modes: usize,
    dim: usize,
    basis: Vec<Vec<u8>>,
    annihilators: Vec<OperatorMatrix>,
    creators: Vec<OperatorMatrix>,
    parity_all: OperatorMatrix,
}

impl FockSystem {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Occupation bit-vectors; `basis()[b][i]` is the occupation of mode `i`
    /// in basis state `b`.
    pub fn basis(&self) -> &[Vec<u8>] {
        &self.basis
    }

    pub fn annihilator(&self, i: usize) -> &OperatorMatrix {
        &self.annihilators[i]
    }

    pub fn creator(&self, i: usize) -> &OperatorMatrix {
        &self.creators[i]
    }

    pub fn annihilators(&self) -> &[OperatorMatrix] {
        &self.annihilators
    }

    pub fn creators(&self) -> &[OperatorMatrix] {
        &self.creators
    }

    /// The vacuum vector (basis state 0).
    pub fn vacuum(&self) -> StateVector {
        let mut v = StateVector::zeros(self.dim);
        v[0] = ONE;
        v
    }

    /// Smeared annihilator `a(f) = sum_i conj(f_i) a_i`.
    pub fn annihilator_field(&self, f: &[Complex64]) -> Result<OperatorMatrix> {
        self.check_mode_vector(f)?;
        let mut out = OperatorMatrix::zeros(self.dim, self.dim);
        for (i, &fi) in f.iter().enumerate() {
            out += self.annihilators[i].map(|z| z * fi.conj());
        }
        Ok(out)
    }

    /// Smeared creator `a(f)† = sum_i f_i a_i†`, the adjoint of
    /// [`Self::annihilator_field`].
    pub fn creator_field(&self, f: &[Complex64]) -> Result<OperatorMatrix> {
        Ok(self.annihilator_field(f)?.adjoint())
    }

    /// Total number operator `sum_i a_i† a_i`.
    pub fn number_operator(&self) -> OperatorMatrix {
        let mut out = OperatorMatrix::zeros(self.dim, self.dim);
        for i in 0..self.modes {
            out += sparse_matmul(&self.creators[i], &self.annihilators[i]);
        }
        out
    }

    /// Overwrites one entry of annihilator `i` (the creator keeps its old
    /// value, so adjointness breaks too). Negative-control helper for
    /// fault-injection paths; the relation report must flag mode `i`.
    pub fn inject_generator_fault(&mut self, i: usize) -> Result<()> {
        if i >= self.modes {
            return Err(Error::DimensionMismatch {
                context: "inject_generator_fault mode index",
                expected: self.modes,
                found: i,
            });
        }
        self.annihilators[i][(0, 0)] += Complex64::new(0.5, 0.0);
        Ok(())
    }

    fn check_mode_vector(&self, f: &[Complex64]) -> Result<()> {
        if f.len() != self.modes {
            return Err(Error::DimensionMismatch {
                context: "mode-coefficient vector",
                expected: self.modes,
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// Builds the occupation-number representation on `m` modes, `1 <= m <= 10`.
/// All anticommutation relations are verified before the system is returned.
pub fn build_fock_system(m: usize) -> Result<FockSystem> {
    if m == 0 || m > MAX_MODES {
        return Err(Error::ModeCountOutOfRange(m));
    }
    let dim = 1usize << m;
    let basis: Vec<Vec<u8>> = (0..dim)
        .map(|b| (0..m).map(|i| ((b >> i) & 1) as u8).collect())
        .collect();

    let mut annihilators = Vec::with_capacity(m);
    for i in 0..m {
        let mut a = OperatorMatrix::zeros(dim, dim);
        let low_mask = (1usize << i) - 1;
        for b in 0..dim {
            if (b >> i) & 1 == 1 {
                let sign = if (b & low_mask).count_ones().is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                };
                a[(b ^ (1 << i), b)] = Complex64::new(sign, 0.0);
            }
        }
        annihilators.push(a);
    }
    let creators: Vec<OperatorMatrix> = annihilators.iter().map(|a| a.adjoint()).collect();

    // parity over all modes: diagonal (-1)^(total occupation)
    let mut parity_all = OperatorMatrix::identity(dim, dim);
    for (i, c) in creators.iter().enumerate() {
        let n_i = sparse_matmul(c, &annihilators[i]);
        let factor = OperatorMatrix::identity(dim, dim) - n_i.scale(2.0);
        parity_all = sparse_matmul(&parity_all, &factor);
    }

    let sys = FockSystem {
        modes: m,
        dim,
        basis,
        annihilators,
        creators,
        parity_all,
    };
    let report = verify_car_relations(&sys);
    if !report.passes {
        return Err(Error::InvalidScenario {
            reason: format!("CAR relations failed at construction: {report}"),
        });
    }
    Ok(sys)
}

/// Conjugation by the index-reversal permutation `b -> dim-1-b`.
///
/// Bridges the occupation-ascending basis used here to the reversed
/// two-dimensional convention that lists the occupied state first: for one
/// mode it maps our `a_0 = [[0,1],[0,0]]` to `[[0,0],[1,0]]`.
pub fn reverse_basis_order(x: &OperatorMatrix) -> OperatorMatrix {
    let dim = x.nrows();
    OperatorMatrix::from_fn(dim, dim, |r, c| x[(dim - 1 - r, dim - 1 - c)])
}

/// Which anticommutation-relation family a deviation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CarRelation {
    /// `{a_i†, a_j} = δ_ij 1`
    CreatorAnnihilator,
    /// `{a_i, a_j} = 0`
    AnnihilatorPair,
    /// `{a_i†, a_j†} = 0`
    CreatorPair,
}

impl std::fmt::Display for CarRelation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CarRelation::CreatorAnnihilator => write!(f, "{{a_i†, a_j}} = δ_ij 1"),
            CarRelation::AnnihilatorPair => write!(f, "{{a_i, a_j}} = 0"),
            CarRelation::CreatorPair => write!(f, "{{a_i†, a_j†}} = 0"),
        }
    }
}

/// Worst observed deviation of one relation instance.
#[derive(Clone, Copy, Debug)]
pub struct CarViolation {
    pub relation: CarRelation,
    pub i: usize,
    pub j: usize,
    pub deviation: f64,
}

/// Result of checking all three relation families over every mode pair.
#[derive(Clone, Debug)]
pub struct CarReport {
    /// Largest deviation over all pairs and families.
    pub max_deviation: f64,
    /// The argmax triple (relation, i, j).
    pub worst: CarViolation,
    /// Largest deviation per family, ordered as in [`CarRelation`].
    pub family_max: [f64; 3],
    /// Pass threshold applied ([`CAR_TOL`]).
    pub tol: f64,
    /// True iff `max_deviation <= tol`.
    pub passes: bool,
}

impl std::fmt::Display for CarReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max deviation {:.3e} (relation {} at i={}, j={}); {}",
            self.max_deviation,
            self.worst.relation,
            self.worst.i,
            self.worst.j,
            if self.passes { "pass" } else { "FAIL" }
        )
    }
}

type SparseCols = Vec<Vec<(usize, Complex64)>>;

/// Matrix product through the nonzero entries only. Identical sums to the
/// dense product (terms accumulate in ascending row order per column); the
/// generators touched here have O(1) entries per column.
fn sparse_matmul(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let a_cols = sparse_columns(a);
    let mut out = OperatorMatrix::zeros(a.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col: Vec<(usize, Complex64)> = (0..b.nrows())
            .filter_map(|r| {
                let v = b[(r, c)];
                (v != Complex64::ZERO).then_some((r, v))
            })
            .collect();
        for (r, v) in apply_sparse(&a_cols, &col) {
            out[(r, c)] = v;
        }
    }
    out
}

fn sparse_columns(m: &OperatorMatrix) -> SparseCols {
    let dim = m.nrows();
    (0..dim)
        .map(|c| {
            (0..dim)
                .filter_map(|r| {
                    let v = m[(r, c)];
                    (v != Complex64::ZERO).then_some((r, v))
                })
                .collect()
        })
        .collect()
}

fn apply_sparse(cols: &SparseCols, v: &[(usize, Complex64)]) -> Vec<(usize, Complex64)> {
    let mut out: Vec<(usize, Complex64)> = Vec::new();
    for &(r0, x) in v {
        for &(r, w) in &cols[r0] {
            out.push((r, w * x));
        }
    }
    out.sort_unstable_by_key(|&(r, _)| r);
    out.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    out
}

/// Max entry magnitude of `AB + BA - delta·1`, computed column by column
/// from the actual stored entries.
fn anticommutator_deviation(a: &SparseCols, b: &SparseCols, delta: f64) -> f64 {
    let dim = a.len();
    let mut dev: f64 = 0.0;
    for c in 0..dim {
        let e = [(c, ONE)];
        let mut sum = apply_sparse(a, &apply_sparse(b, &e));
        sum.extend(apply_sparse(b, &apply_sparse(a, &e)));
        sum.push((c, Complex64::new(-delta, 0.0)));
        sum.sort_unstable_by_key(|&(r, _)| r);
        sum.dedup_by(|y, x| {
            if x.0 == y.0 {
                x.1 += y.1;
                true
            } else {
                false
            }
        });
        for &(_, v) in &sum {
            dev = dev.max(v.norm());
        }
    }
    dev
}

/// Checks the three anticommutation-relation families over all mode pairs
/// and reports the worst deviation. Operates on the stored matrices, so a
/// corrupted generator is flagged with its failing (relation, i, j) triple.
pub fn verify_car_relations(sys: &FockSystem) -> CarReport {
    let ann: Vec<SparseCols> = sys.annihilators.iter().map(sparse_columns).collect();
    let cre: Vec<SparseCols> = sys.creators.iter().map(sparse_columns).collect();

    let mut worst = CarViolation {
        relation: CarRelation::CreatorAnnihilator,
        i: 0,
        j: 0,
        deviation: 0.0,
    };
    let mut family_max = [0.0f64; 3];
    let families = [
        CarRelation::CreatorAnnihilator,
        CarRelation::AnnihilatorPair,
        CarRelation::CreatorPair,
    ];
    for i in 0..sys.modes {
        for j in 0..sys.modes {
            let devs = [
                anticommutator_deviation(&cre[i], &ann[j], if i == j { 1.0 } else { 0.0 }),
                anticommutator_deviation(&ann[i], &ann[j], 0.0),
                anticommutator_deviation(&cre[i], &cre[j], 0.0),
            ];
            for (fam, &dev) in devs.iter().enumerate() {
                family_max[fam] = family_max[fam].max(dev);
                if dev > worst.deviation {
                    worst = CarViolation {
                        relation: families[fam],
                        i,
                        j,
                        deviation: dev,
                    };
                }
            }
        }
    }
    let max_deviation = worst.deviation;
    CarReport {
        max_deviation,
        worst,
        family_max,
        tol: CAR_TOL,
        passes: max_deviation <= CAR_TOL,
    }
}

/// Unitary permutation operator on `(C^d)^(⊗n)`.
///
/// Slot `k` of `P_σ(x_1 ⊗ ... ⊗ x_n)` is `x_{σ(k)}` (0-based), which gives
/// the composition law `P_σ P_τ = P_{τ∘σ}`.
#[derive(Clone, Debug)]
pub struct PermutationOperator {
    n: usize,
    d: usize,
    sigma: Vec<usize>,
    matrix: OperatorMatrix,
}

impl PermutationOperator {
    /// `sigma` must be a permutation of `0..n`; the tensor dimension `d^n`
    /// is capped at [`MAX_TENSOR_DIM`].
    pub fn new(n: usize, d: usize, sigma: &[usize]) -> Result<Self> {
        let dim = tensor_dim(d, n)?;
        if sigma.len() != n {
            return Err(Error::DimensionMismatch {
                context: "permutation length",
                expected: n,
                found: sigma.len(),
            });
        }
        let mut seen = vec![false; n];
        for &s in sigma {
            if s >= n || seen[s] {
                return Err(Error::InvalidScenario {
                    reason: format!("{sigma:?} is not a permutation of 0..{n}"),
                });
            }
            seen[s] = true;
        }
        let mut matrix = OperatorMatrix::zeros(dim, dim);
        let mut digits = vec![0usize; n];
        let mut permuted = vec![0usize; n];
        for col in 0..dim {
            decode_digits(col, d, &mut digits);
            for k in 0..n {
                permuted[k] = digits[sigma[k]];
            }
            matrix[(encode_digits(&permuted, d), col)] = ONE;
        }
        Ok(Self {
            n,
            d,
            sigma: sigma.to_vec(),
            matrix,
        })
    }

    pub fn particle_count(&self) -> usize {
        self.n
    }

    pub fn one_particle_dim(&self) -> usize {
        self.d
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }
}

/// Function composition `(a ∘ b)(k) = a[b[k]]` of 0-based permutations.
pub fn compose_permutations(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&k| a[k]).collect()
}

/// Signed antisymmetrizer `(1/n!) Σ_σ sgn(σ) P_σ`: the self-adjoint
/// idempotent projecting onto the antisymmetric subspace of `(C^d)^(⊗n)`.
pub fn antisymmetrizer(n: usize, d: usize) -> Result<OperatorMatrix> {
    permutation_average(n, d, true)
}

/// Unsigned average `(1/n!) Σ_σ P_σ`, the projection onto the symmetric
/// subspace. Exposed for inspection alongside the signed version; the Fermi
/// sector is built exclusively from [`antisymmetrizer`].
pub fn symmetrizer(n: usize, d: usize) -> Result<OperatorMatrix> {
    permutation_average(n, d, false)
}

fn tensor_dim(d: usize, n: usize) -> Result<usize> {
    if n == 0 || d == 0 {
        return Err(Error::DimensionOverflow(format!(
            "tensor power requires n >= 1 and d >= 1, got d = {d}, n = {n}"
        )));
    }
    let mut dim = 1usize;
    for _ in 0..n {
        dim = dim.saturating_mul(d);
        if dim > MAX_TENSOR_DIM {
            return Err(Error::DimensionOverflow(format!(
                "d^n = {d}^{n} exceeds the cap {MAX_TENSOR_DIM}"
            )));
        }
    }
    Ok(dim)
}

fn permutation_average(n: usize, d: usize, signed: bool) -> Result<OperatorMatrix> {
    let dim = tensor_dim(d, n)?;
    if d == 1 {
        // one-dimensional slots: every P_σ is [1]; the signed sum vanishes
        // for n >= 2 because S_n splits evenly by sign
        let value = if signed && n >= 2 { 0.0 } else { 1.0 };
        return Ok(OperatorMatrix::from_element(1, 1, Complex64::new(value, 0.0)));
    }
    if n <= 8 {
        return Ok(permutation_average_direct(n, d, dim, signed));
    }
    Ok(permutation_average_recursive(n, d, signed))
}

/// Direct sum over all `n!` permutations (Heap's algorithm, sign tracked
/// per transposition).
fn permutation_average_direct(n: usize, d: usize, dim: usize, signed: bool) -> OperatorMatrix {
    let mut acc = OperatorMatrix::zeros(dim, dim);
    let mut digits = vec![0usize; n];
    let mut permuted = vec![0usize; n];
    let mut count = 0usize;
    for_each_permutation_with_sign(n, |sigma, sign| {
        let weight = if signed { sign } else { 1.0 };
        for col in 0..dim {
            decode_digits(col, d, &mut digits);
            for k in 0..n {
                permuted[k] = digits[sigma[k]];
            }
            acc[(encode_digits(&permuted, d), col)] += Complex64::new(weight, 0.0);
        }
        count += 1;
    });
    acc.scale(1.0 / count as f64)
}

/// Coset recursion over the stabilizer of the last slot:
/// `n! A_n = (1 ∓ Σ_{j<n-1} P_(j,n-1)) · (n-1)! (A_{n-1} ⊗ 1)`.
/// Used above the direct-enumeration range; identical operator, O(n) matrix
/// passes instead of n! terms.
fn permutation_average_recursive(n: usize, d: usize, signed: bool) -> OperatorMatrix {
    if n == 1 {
        return OperatorMatrix::identity(d, d);
    }
    let prev = permutation_average_recursive(n - 1, d, signed);
    let ext = kron(&prev, &OperatorMatrix::identity(d, d));
    let dim = ext.nrows();
    let mut acc = ext.clone();
    let mut digits = vec![0usize; n];
    for j in 0..n - 1 {
        // P_(j,n-1) · M permutes rows: row r of the product is row swap(r) of M
        for r in 0..dim {
            decode_digits(r, d, &mut digits);
            digits.swap(j, n - 1);
            let src = encode_digits(&digits, d);
            for c in 0..dim {
                let v = ext[(src, c)];
                if signed {
                    acc[(r, c)] -= v;
                } else {
                    acc[(r, c)] += v;
                }
            }
        }
    }
    acc.scale(1.0 / n as f64)
}

fn decode_digits(index: usize, d: usize, digits: &mut [usize]) {
    let mut rest = index;
    for k in (0..digits.len()).rev() {
        digits[k] = rest % d;
        rest /= d;
    }
}

fn encode_digits(digits: &[usize], d: usize) -> usize {
    digits.iter().fold(0, |acc, &j| acc * d + j)
}

/// Visits every permutation of `0..n` with its sign (+1 for even), starting
/// from the identity. Heap's algorithm: each step is one transposition.
fn for_each_permutation_with_sign<F: FnMut(&[usize], f64)>(n: usize, mut f: F) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut sign = 1.0;
    f(&a, sign);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            sign = -sign;
            f(&a, sign);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Normalized wedge vector of the listed modes (ascending order fixes the
/// sign): `(1/sqrt(k!)) Σ_σ sgn(σ) e_{modes[σ(0)]} ⊗ ... ⊗ e_{modes[σ(k-1)]}`.
fn wedge_tensor(m: usize, modes: &[usize]) -> StateVector {
    let k = modes.len();
    if k == 0 {
        return StateVector::from_element(1, ONE);
    }
    let dim = m.pow(k as u32);
    let mut v = StateVector::zeros(dim);
    let mut slots = vec![0usize; k];
    let mut count = 0usize;
    for_each_permutation_with_sign(k, |sigma, sign| {
        for (slot, &s) in sigma.iter().enumerate() {
            slots[slot] = modes[s];
        }
        v[encode_digits(&slots, m)] += Complex64::new(sign, 0.0);
        count += 1;
    });
    v.scale(1.0 / (count as f64).sqrt())
}

fn occupied_modes(b: usize, m: usize) -> Vec<usize> {
    (0..m).filter(|i| (b >> i) & 1 == 1).collect()
}

/// Creation through the tensor route: sector `N` of the result is
/// `sqrt(N) · A_N (f ⊗ x^(N-1))`, with occupation states identified with
/// wedge vectors of their occupied modes in ascending order.
///
/// Cross-validation path for the occupation-basis creator
/// `sum_i f_i a_i†`; the two agree entrywise (covered by tests). Tensor
/// dimensions `m^N` are capped at [`MAX_TENSOR_DIM`].
pub fn creation_via_antisymmetrizer(
    sys: &FockSystem,
    f: &[Complex64],
    x: &StateVector,
) -> Result<StateVector> {
    sys.check_mode_vector(f)?;
    if x.len() != sys.dim {
        return Err(Error::DimensionMismatch {
            context: "Fock vector",
            expected: sys.dim,
            found: x.len(),
        });
    }
    let m = sys.modes;
    let mut out = StateVector::zeros(sys.dim);
    for n_target in 1..=m {
        let n_src = n_target - 1;
        let src_states: Vec<usize> = (0..sys.dim)
            .filter(|&b| b.count_ones() as usize == n_src)
            .collect();
        if src_states.iter().all(|&b| x[b] == Complex64::ZERO) {
            continue;
        }
        // source sector as a tensor in (C^m)^(⊗ n_src)
        let src_dim = m.pow(n_src as u32);
        let mut t = StateVector::zeros(src_dim.max(1));
        for &b in &src_states {
            if x[b] != Complex64::ZERO {
                t += wedge_tensor(m, &occupied_modes(b, m)).scale_complex(x[b]);
            }
        }
        // f ⊗ t, then project with the signed antisymmetrizer
        let a_n = antisymmetrizer(n_target, m)?;
        let mut ft = StateVector::zeros(m * t.len());
        for (i, &fi) in f.iter().enumerate() {
            for (j, &tj) in t.iter().enumerate() {
                ft[i * t.len() + j] = fi * tj;
            }
        }
        let y = (a_n * ft).scale((n_target as f64).sqrt());
        for b in 0..sys.dim {
            if b.count_ones() as usize == n_target {
                out[b] += wedge_tensor(m, &occupied_modes(b, m)).dotc(&y);
            }
        }
    }
    Ok(out)
}

trait ScaleComplex {
    fn scale_complex(&self, s: Complex64) -> StateVector;
}
impl ScaleComplex for StateVector {
    fn scale_complex(&self, s: Complex64) -> StateVector {
        self.map(|z| z * s)
    }
}

/// Parity automorphism `Θ_I`: conjugation by the self-adjoint unitary
/// `Π_{i∈I} (1 - 2 a_i† a_i)`, which flips the sign of every generator
/// supported in `I` and fixes the others.
#[derive(Clone, Debug)]
pub struct ParityMap {
    support: BTreeSet<usize>,
    matrix: OperatorMatrix,
}

impl ParityMap {
    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    /// The implementing unitary (diagonal, entries ±1, an involution).
    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    /// `Θ_I(x) = W x W` (W is self-adjoint and its own inverse).
    pub fn apply(&self, x: &OperatorMatrix) -> OperatorMatrix {
        &self.matrix * x * &self.matrix
    }
}

/// Builds `Θ_I` for `support ⊆ {0..m-1}`.
pub fn parity_automorphism(sys: &FockSystem, support: &BTreeSet<usize>) -> Result<ParityMap> {
    if let Some(&bad) = support.iter().find(|&&i| i >= sys.modes) {
        return Err(Error::DimensionMismatch {
            context: "parity support mode index",
            expected: sys.modes,
            found: bad,
        });
    }
    let mut w = OperatorMatrix::identity(sys.dim, sys.dim);
    for &i in support {
        let n_i = sparse_matmul(&sys.creators[i], &sys.annihilators[i]);
        let factor = OperatorMatrix::identity(sys.dim, sys.dim) - n_i.scale(2.0);
        w = sparse_matmul(&w, &factor);
    }
    Ok(ParityMap {
        support: support.clone(),
        matrix: w,
    })
}

/// Projection `(x + Θ(x))/2` onto the even subalgebra, with `Θ` the parity
/// automorphism over all modes.
pub fn even_part(sys: &FockSystem, x: &OperatorMatrix) -> Result<OperatorMatrix> {
    if x.nrows() != sys.dim || x.ncols() != sys.dim {
        return Err(Error::DimensionMismatch {
            context: "even_part operand",
            expected: sys.dim,
            found: x.nrows(),
        });
    }
    let conjugated = &sys.parity_all * x * &sys.parity_all;
    Ok((x + conjugated).scale(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eig, max_abs, max_abs_diff, unitarity_deviation};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn mode_count_bounds() {
        assert!(build_fock_system(0).is_err());
        assert!(build_fock_system(11).is_err());
        assert!(build_fock_system(1).is_ok());
        assert!(build_fock_system(10).is_ok());
    }

    #[test]
    fn single_mode_matrices() {
        let sys = build_fock_system(1).unwrap();
        // occupation-ascending order (|0>, |1>): a_0 maps |1> to |0>
        let mut expect = OperatorMatrix::zeros(2, 2);
        expect[(0, 1)] = c(1.0, 0.0);
        assert_eq!(sys.annihilator(0), &expect);
        assert_eq!(sys.creator(0), &expect.adjoint());
    }

    #[test]
    fn reversed_basis_matches_occupied_first_convention() {
        let sys = build_fock_system(1).unwrap();
        let a = reverse_basis_order(sys.annihilator(0));
        let mut expect = OperatorMatrix::zeros(2, 2);
        expect[(1, 0)] = c(1.0, 0.0); // [[0,0],[1,0]]
        assert_eq!(a, expect);
        let astar = reverse_basis_order(sys.creator(0));
        assert_eq!(astar, expect.adjoint()); // [[0,1],[0,0]]
    }

    #[test]
    fn creators_are_exact_adjoints() {
        let sys = build_fock_system(4).unwrap();
        for i in 0..4 {
            assert_eq!(sys.creator(i), &sys.annihilator(i).adjoint());
        }
    }

    #[test]
    fn car_relations_hold_up_to_ten_modes() {
        for m in [1, 2, 3, 4, 6, 10] {
            let sys = build_fock_system(m).unwrap();
            let report = verify_car_relations(&sys);
            assert!(report.passes, "m = {m}: {report}");
            assert_eq!(report.max_deviation, 0.0, "relations are exact for 0/±1 entries");
        }
    }

    #[test]
    fn pauli_exclusion() {
        let sys = build_fock_system(3).unwrap();
        for i in 0..3 {
            let a = sys.annihilator(i);
            let sq = a * a;
            assert_eq!(max_abs(&sq), 0.0);
            let csq = sys.creator(i) * sys.creator(i);
            assert_eq!(max_abs(&csq), 0.0);
        }
    }

    #[test]
    fn mixed_anticommutator_vanishes() {
        let sys = build_fock_system(2).unwrap();
        let anti = sys.annihilator(0) * sys.creator(1) + sys.creator(1) * sys.annihilator(0);
        assert!(max_abs(&anti) <= 1e-14);
    }

    #[test]
    fn corrupted_generator_is_flagged() {
        let mut sys = build_fock_system(3).unwrap();
        sys.inject_generator_fault(1).unwrap();
        let report = verify_car_relations(&sys);
        assert!(!report.passes);
        assert!(report.worst.i == 1 || report.worst.j == 1);
        assert!(report.max_deviation >= 0.5);
    }

    #[test]
    fn smeared_field_relations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sys = build_fock_system(4).unwrap();
        for _ in 0..5 {
            let f: Vec<Complex64> = (0..4)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let g: Vec<Complex64> = (0..4)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let af = sys.annihilator_field(&f).unwrap();
            let agd = sys.creator_field(&g).unwrap();
            let inner: Complex64 = f.iter().zip(&g).map(|(x, y)| x.conj() * y).sum();
            let anti = &af * &agd + &agd * &af;
            let expect = OperatorMatrix::identity(16, 16).map(|z| z * inner);
            assert!(max_abs_diff(&anti, &expect) <= 1e-12);

            let ag = sys.annihilator_field(&g).unwrap();
            let anti2 = &af * &ag + &ag * &af;
            assert!(max_abs(&anti2) <= 1e-12);
        }
    }

    #[test]
    fn number_operator_spectrum() {
        let m = 4;
        let sys = build_fock_system(m).unwrap();
        let spec = hermitian_eig(&sys.number_operator()).unwrap();
        let mut counts = vec![0usize; m + 1];
        for &lam in &spec.eigenvalues {
            let k = lam.round() as usize;
            assert!((lam - k as f64).abs() <= 1e-12);
            counts[k] += 1;
        }
        // binomial multiplicities C(4, k)
        assert_eq!(counts, vec![1, 4, 6, 4, 1]);
    }

    #[test]
    fn permutation_operator_composition_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let n = 3;
            let d = 2;
            let sigma = crate::random::random_permutation(n, &mut rng);
            let tau = crate::random::random_permutation(n, &mut rng);
            let p_sigma = PermutationOperator::new(n, d, &sigma).unwrap();
            let p_tau = PermutationOperator::new(n, d, &tau).unwrap();
            // P_σ P_τ = P_{τ∘σ}
            let composed = PermutationOperator::new(n, d, &compose_permutations(&tau, &sigma))
                .unwrap();
            let product = p_sigma.matrix() * p_tau.matrix();
            assert_eq!(&product, composed.matrix());
            assert!(unitarity_deviation(p_sigma.matrix()) <= 1e-12);
        }
    }

    #[test]
    fn permutation_operator_rejects_bad_input() {
        assert!(PermutationOperator::new(3, 2, &[0, 0, 1]).is_err());
        assert!(PermutationOperator::new(3, 2, &[0, 1]).is_err());
        assert!(PermutationOperator::new(13, 2, &(0..13).collect::<Vec<_>>()).is_err());
    }

    #[test]
    fn antisymmetrizer_one_particle_is_identity() {
        let a = antisymmetrizer(1, 3).unwrap();
        assert_eq!(a, OperatorMatrix::identity(3, 3));
    }

    #[test]
    fn antisymmetrizer_two_particle_examples() {
        let a = antisymmetrizer(2, 2).unwrap();
        // repeated vector is annihilated
        let mut e00 = StateVector::zeros(4);
        e00[0] = c(1.0, 0.0);
        assert!((a.clone() * e00).norm() <= 1e-15);
        // e0 ⊗ e1 antisymmetrizes to (e0⊗e1 - e1⊗e0)/2
        let mut e01 = StateVector::zeros(4);
        e01[1] = c(1.0, 0.0);
        let out = a * e01;
        let mut expect = StateVector::zeros(4);
        expect[1] = c(0.5, 0.0);
        expect[2] = c(-0.5, 0.0);
        assert!((out - expect).norm() <= 1e-15);
    }

    #[test]
    fn averages_are_projections_with_known_rank() {
        for (n, d) in [(2usize, 2usize), (3, 2), (2, 3), (3, 3), (4, 2)] {
            for signed in [true, false] {
                let p = permutation_average(n, d, signed).unwrap();
                assert!(max_abs_diff(&(&p * &p), &p) <= 1e-13, "idempotent n={n} d={d}");
                assert!(crate::linalg::hermitian_deviation(&p) <= 1e-13);
                let rank = p.trace().re;
                let expect = if signed {
                    binomial(d, n) // C(d, n), 0 when n > d
                } else {
                    binomial(d + n - 1, n)
                };
                assert_abs_diff_eq!(rank, expect as f64, epsilon = 1e-10);
            }
        }
    }

    fn binomial(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        let mut acc = 1usize;
        for i in 0..k {
            acc = acc * (n - i) / (i + 1);
        }
        acc
    }

    #[test]
    fn recursive_average_matches_direct_enumeration() {
        for (n, d) in [(2usize, 2usize), (3, 2), (4, 2), (3, 3), (5, 2)] {
            for signed in [true, false] {
                let dim = d.pow(n as u32);
                let direct = permutation_average_direct(n, d, dim, signed);
                let recursive = permutation_average_recursive(n, d, signed);
                assert!(
                    max_abs_diff(&direct, &recursive) <= 1e-14,
                    "n={n} d={d} signed={signed}"
                );
            }
        }
    }

    #[test]
    fn deep_tensor_powers_stay_within_cap() {
        // n = 9, d = 2 exercises the recursive path: the Fermi projector on
        // more particles than dimensions is zero, the Bose one is not
        let a = antisymmetrizer(9, 2).unwrap();
        assert!(max_abs(&a) <= 1e-12);
        let s = symmetrizer(9, 2).unwrap();
        assert_abs_diff_eq!(s.trace().re, 10.0, epsilon = 1e-9); // C(10, 9)
        assert!(antisymmetrizer(13, 2).is_err()); // 2^13 over the cap
        // one-dimensional slots shortcut
        let a1 = antisymmetrizer(5, 1).unwrap();
        assert_eq!(a1[(0, 0)], c(0.0, 0.0));
        let s1 = symmetrizer(5, 1).unwrap();
        assert_eq!(s1[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn creation_from_vacuum_matches_occupation_state() {
        let sys = build_fock_system(3).unwrap();
        let f = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = creation_via_antisymmetrizer(&sys, &f, &sys.vacuum()).unwrap();
        let mut expect = StateVector::zeros(8);
        expect[1] = c(1.0, 0.0); // mode 0 occupied
        assert!((out - expect).norm() <= 1e-14);
    }

    #[test]
    fn double_creation_vanishes() {
        let sys = build_fock_system(2).unwrap();
        let f = vec![c(0.6, 0.2), c(-0.3, 0.7)];
        let once = creation_via_antisymmetrizer(&sys, &f, &sys.vacuum()).unwrap();
        let twice = creation_via_antisymmetrizer(&sys, &f, &once).unwrap();
        assert!(twice.norm() <= 1e-13, "Pauli exclusion on the tensor route");
    }

    #[test]
    fn antisymmetrizer_route_matches_occupation_creator() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let sys = build_fock_system(3).unwrap();
        for _ in 0..10 {
            let f: Vec<Complex64> = (0..3)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let x = StateVector::from_fn(8, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let tensor_route = creation_via_antisymmetrizer(&sys, &f, &x).unwrap();
            let occupation_route = sys.creator_field(&f).unwrap() * &x;
            assert!(
                (tensor_route - occupation_route).norm() <= 1e-12,
                "the two creation paths disagree"
            );
        }
    }

    #[test]
    fn parity_flips_supported_generators() {
        let sys = build_fock_system(3).unwrap();
        let support: BTreeSet<usize> = [0, 2].into_iter().collect();
        let theta = parity_automorphism(&sys, &support).unwrap();
        for i in 0..3 {
            let image = theta.apply(sys.annihilator(i));
            let expect = if support.contains(&i) {
                sys.annihilator(i).scale(-1.0)
            } else {
                sys.annihilator(i).clone()
            };
            assert!(max_abs_diff(&image, &expect) <= 1e-14, "mode {i}");
        }
        // involution
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = OperatorMatrix::from_fn(8, 8, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        assert!(max_abs_diff(&theta.apply(&theta.apply(&x)), &x) <= 1e-13);
    }

    #[test]
    fn parity_empty_support_is_identity() {
        let sys = build_fock_system(2).unwrap();
        let theta = parity_automorphism(&sys, &BTreeSet::new()).unwrap();
        let x = sys.creator(0) * sys.annihilator(1);
        assert!(max_abs_diff(&theta.apply(&x), &x) <= 1e-15);
    }

    #[test]
    fn parity_is_star_automorphism() {
        let sys = build_fock_system(2).unwrap();
        let support: BTreeSet<usize> = [0, 1].into_iter().collect();
        let theta = parity_automorphism(&sys, &support).unwrap();
        // even monomial fixed
        let even = sys.creator(0) * sys.annihilator(1);
        assert!(max_abs_diff(&theta.apply(&even), &even) <= 1e-14);
        // products and adjoints preserved on random elements
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..5 {
            let x = OperatorMatrix::from_fn(4, 4, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let y = OperatorMatrix::from_fn(4, 4, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let lhs = theta.apply(&(&x * &y));
            let rhs = theta.apply(&x) * theta.apply(&y);
            assert!(max_abs_diff(&lhs, &rhs) <= 1e-12);
            let star = theta.apply(&x.adjoint());
            assert!(max_abs_diff(&star, &theta.apply(&x).adjoint()) <= 1e-12);
        }
    }

    #[test]
    fn parity_rejects_bad_support() {
        let sys = build_fock_system(2).unwrap();
        let support: BTreeSet<usize> = [3].into_iter().collect();
        assert!(parity_automorphism(&sys, &support).is_err());
    }

    #[test]
    fn even_part_examples() {
        let sys = build_fock_system(1).unwrap();
        let a0 = sys.annihilator(0);
        let n0 = sys.creator(0) * a0;
        // odd generator projects to zero
        assert!(max_abs(&even_part(&sys, a0).unwrap()) <= 1e-15);
        // even monomial is fixed
        assert!(max_abs_diff(&even_part(&sys, &n0).unwrap(), &n0) <= 1e-15);
        // linearity
        let mixed = a0 + &n0;
        assert!(max_abs_diff(&even_part(&sys, &mixed).unwrap(), &n0) <= 1e-15);
        // idempotence
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let x = OperatorMatrix::from_fn(2, 2, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let once = even_part(&sys, &x).unwrap();
        let twice = even_part(&sys, &once).unwrap();
        assert!(max_abs_diff(&once, &twice) <= 1e-15);
    }
}
