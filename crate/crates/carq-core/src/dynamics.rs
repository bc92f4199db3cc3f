//! Partitions of the identity, inner *-automorphisms, transition expectations,
//! and the joint/marginal states of the induced quantum Markov chain.
//!
//! A scenario couples a site algebra carrying a density matrix `rho` with a
//! partition `{gamma_i}` of k elements and an inner automorphism
//! `theta(x) = U x U†`. Length-n words over the symbols 1..k index chain
//! branches. Two orderings of the evolved operator products are supported:
//! [`KernelVariant::Aow`] uses exponents theta^{n-1}..theta^0 and
//! [`KernelVariant::Car`] uses theta^n..theta^1.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Mutex;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kernel::{propagate_leaves, IndexWord, LeafVisitor};
use crate::linalg::{
    self, require_square, OperatorMatrix, DENSITY_TOL, EIG_CLAMP_FLOOR, HERMITIAN_TOL, UNITARY_TOL,
};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance for the partition-of-identity invariants.
pub const PARTITION_TOL: f64 = 1e-10;

/// Default cap on the number of enumerated words per run.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 20;

/// Largest matrix dimension dense chain-state views will materialize.
pub const DENSE_DIM_CAP: usize = 4096;

/// Declared algebraic type of a partition of the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionKind {
    /// Self-adjoint idempotents with gamma_i gamma_j = delta_ij gamma_j summing to 1.
    OrthogonalProjective,
    /// Kraus family with sum_i gamma_i† gamma_i = 1.
    Kraus,
}

impl PartitionKind {
    pub fn label(self) -> &'static str {
        match self {
            PartitionKind::OrthogonalProjective => "orthogonal-projective",
            PartitionKind::Kraus => "kraus",
        }
    }
}

impl fmt::Display for PartitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ordered family of site operators declared as a partition of the identity.
#[derive(Clone, Debug)]
pub struct Partition {
    elements: Vec<OperatorMatrix>,
    kind: PartitionKind,
}

impl Partition {
    /// Validates shapes and the declared kind's invariants.
    pub fn new(elements: Vec<OperatorMatrix>, kind: PartitionKind) -> Result<Self> {
        let p = Self::with_shape_checks(elements, kind)?;
        let report = validate_partition(&p);
        if !report.passes() {
            return Err(Error::InvalidPartition {
                reason: report.to_string(),
            });
        }
        Ok(p)
    }

    /// Shape checks only; algebraic invariants are left to the caller.
    /// Negative-control tests and fault injection enter through here.
    pub fn new_unchecked(elements: Vec<OperatorMatrix>, kind: PartitionKind) -> Result<Self> {
        Self::with_shape_checks(elements, kind)
    }

    fn with_shape_checks(elements: Vec<OperatorMatrix>, kind: PartitionKind) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPartition {
                reason: "partition has no elements".into(),
            });
        }
        let dim = require_square(&elements[0], "partition element")?;
        if dim == 0 {
            return Err(Error::InvalidPartition {
                reason: "partition elements are zero-dimensional".into(),
            });
        }
        for g in &elements {
            let d = require_square(g, "partition element")?;
            if d != dim {
                return Err(Error::DimensionMismatch {
                    context: "partition element",
                    expected: dim,
                    found: d,
                });
            }
        }
        Ok(Self { elements, kind })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Dimension of the site algebra the elements act on.
    pub fn dim(&self) -> usize {
        self.elements[0].nrows()
    }

    pub fn kind(&self) -> PartitionKind {
        self.kind
    }

    pub fn elements(&self) -> &[OperatorMatrix] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &OperatorMatrix {
        &self.elements[i]
    }
}

/// Single measured invariant of a partition.
#[derive(Clone, Debug)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub deviation: f64,
}

/// Per-invariant deviations for a partition; passes iff all are within `tol`.
#[derive(Clone, Debug)]
pub struct PartitionReport {
    pub kind: PartitionKind,
    pub checks: Vec<InvariantCheck>,
    pub tol: f64,
}

impl PartitionReport {
    pub fn max_deviation(&self) -> f64 {
        self.checks.iter().map(|c| c.deviation).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.checks.iter().all(|c| c.deviation <= self.tol)
    }
}

impl fmt::Display for PartitionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} partition:", self.kind)?;
        for c in &self.checks {
            write!(f, " {} {:.3e};", c.name, c.deviation)?;
        }
        write!(
            f,
            " tol {:.1e}: {}",
            self.tol,
            if self.passes() { "pass" } else { "FAIL" }
        )
    }
}

/// Measures every invariant of the declared kind; pass iff each deviation is
/// at most 1e-10.
///
/// Orthogonal-projective families are additionally required to be
/// self-adjoint: orthogonality presupposes it, and the word-normalization
/// identity sum_i gamma_i† gamma_i = 1 fails for oblique idempotents.
pub fn validate_partition(p: &Partition) -> PartitionReport {
    let dim = p.dim();
    let id = OperatorMatrix::identity(dim, dim);
    let mut checks = Vec::new();
    match p.kind() {
        PartitionKind::OrthogonalProjective => {
            let mut sum = OperatorMatrix::zeros(dim, dim);
            for g in p.elements() {
                sum += g;
            }
            checks.push(InvariantCheck {
                name: "sum to identity",
                deviation: linalg::max_abs_diff(&sum, &id),
            });
            let mut orth: f64 = 0.0;
            for (i, gi) in p.elements().iter().enumerate() {
                for (j, gj) in p.elements().iter().enumerate() {
                    let prod = gi * gj;
                    let dev = if i == j {
                        linalg::max_abs_diff(&prod, gj)
                    } else {
                        linalg::max_abs(&prod)
                    };
                    orth = orth.max(dev);
                }
            }
            checks.push(InvariantCheck {
                name: "mutual orthogonality",
                deviation: orth,
            });
            let sa = p
                .elements()
                .iter()
                .map(linalg::hermitian_deviation)
                .fold(0.0, f64::max);
            checks.push(InvariantCheck {
                name: "self-adjointness",
                deviation: sa,
            });
        }
        PartitionKind::Kraus => {
            let mut sum = OperatorMatrix::zeros(dim, dim);
            for g in p.elements() {
                sum += g.adjoint() * g;
            }
            checks.push(InvariantCheck {
                name: "completeness",
                deviation: linalg::max_abs_diff(&sum, &id),
            });
        }
    }
    PartitionReport {
        kind: p.kind(),
        checks,
        tol: PARTITION_TOL,
    }
}

/// Inner *-automorphism theta(x) = U x U† with cached powers of U.
///
/// Powers are extended by repeated multiplication so the k-th power costs k
/// products once and is then reused; conjugation chains are never recomputed.
#[derive(Debug)]
pub struct Automorphism {
    unitary: OperatorMatrix,
    adjoint: OperatorMatrix,
    powers: Mutex<Vec<OperatorMatrix>>,
}

impl Clone for Automorphism {
    fn clone(&self) -> Self {
        let powers = self.powers.lock().expect("power cache poisoned").clone();
        Self {
            unitary: self.unitary.clone(),
            adjoint: self.adjoint.clone(),
            powers: Mutex::new(powers),
        }
    }
}

impl Automorphism {
    /// Rejects implementations that are not unitary within 1e-10.
    pub fn new(unitary: OperatorMatrix) -> Result<Self> {
        require_square(&unitary, "automorphism unitary")?;
        let deviation = linalg::unitarity_deviation(&unitary);
        if !(deviation <= UNITARY_TOL) {
            return Err(Error::NotUnitary {
                deviation,
                tol: UNITARY_TOL,
            });
        }
        let adjoint = unitary.adjoint();
        let id = OperatorMatrix::identity(unitary.nrows(), unitary.ncols());
        let powers = Mutex::new(vec![id, unitary.clone()]);
        Ok(Self {
            unitary,
            adjoint,
            powers,
        })
    }

    /// The trivial automorphism on a dim-dimensional site.
    pub fn trivial(dim: usize) -> Self {
        Self::new(OperatorMatrix::identity(dim, dim)).expect("identity is unitary")
    }

    pub fn dim(&self) -> usize {
        self.unitary.nrows()
    }

    pub fn unitary(&self) -> &OperatorMatrix {
        &self.unitary
    }

    /// U†.
    pub fn adjoint_unitary(&self) -> &OperatorMatrix {
        &self.adjoint
    }

    /// U^k from the cache, extending it as needed.
    pub fn power(&self, k: usize) -> OperatorMatrix {
        let mut powers = self.powers.lock().expect("power cache poisoned");
        while powers.len() <= k {
            let next = powers.last().expect("cache is seeded") * &self.unitary;
            powers.push(next);
        }
        powers[k].clone()
    }

    /// theta(x) = U x U†.
    pub fn apply(&self, x: &OperatorMatrix) -> OperatorMatrix {
        &self.unitary * x * &self.adjoint
    }

    /// State-side action theta*(x) = U† x U.
    pub fn predual(&self, x: &OperatorMatrix) -> OperatorMatrix {
        &self.adjoint * x * &self.unitary
    }

    /// theta^k(x) = U^k x (U^k)†.
    pub fn apply_power(&self, k: usize, x: &OperatorMatrix) -> OperatorMatrix {
        let p = self.power(k);
        &p * x * p.adjoint()
    }
}

/// Ordering of the evolved operator products Gamma_w.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelVariant {
    /// Gamma_w = theta^{n-1}(gamma_{i_n}) ... theta(gamma_{i_2}) gamma_{i_1}.
    Aow,
    /// Gamma_w = theta^n(gamma_{i_n}) ... theta^2(gamma_{i_2}) theta(gamma_{i_1}).
    Car,
}

impl KernelVariant {
    pub fn label(self) -> &'static str {
        match self {
            KernelVariant::Aow => "aow",
            KernelVariant::Car => "car",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "aow" => Ok(KernelVariant::Aow),
            "car" => Ok(KernelVariant::Car),
            other => Err(Error::InvalidScenario {
                reason: format!("unknown variant {other:?}, expected \"aow\" or \"car\""),
            }),
        }
    }
}

impl fmt::Display for KernelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A fully specified chain: density matrix, partition, automorphism, product
/// ordering, horizon, prune threshold, and enumeration cap.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub rho: OperatorMatrix,
    pub partition: Partition,
    pub automorphism: Automorphism,
    pub variant: KernelVariant,
    pub horizon: usize,
    /// Branches whose weight is strictly below this are dropped into pruned mass.
    pub prune: f64,
    /// Cap on the number of retained words.
    pub cap: u64,
}

impl Scenario {
    pub fn new(
        rho: OperatorMatrix,
        partition: Partition,
        automorphism: Automorphism,
        variant: KernelVariant,
        horizon: usize,
    ) -> Result<Self> {
        if let Some(reason) = linalg::density_violation(&rho, DENSITY_TOL) {
            return Err(Error::InvalidDensity { reason });
        }
        let dim = rho.nrows();
        if partition.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "scenario partition",
                expected: dim,
                found: partition.dim(),
            });
        }
        if automorphism.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "scenario automorphism",
                expected: dim,
                found: automorphism.dim(),
            });
        }
        if horizon == 0 {
            return Err(Error::InvalidScenario {
                reason: "horizon must be at least 1".into(),
            });
        }
        Ok(Self {
            rho,
            partition,
            automorphism,
            variant,
            horizon,
            prune: 0.0,
            cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    pub fn with_prune(mut self, prune: f64) -> Result<Self> {
        if !prune.is_finite() || prune < 0.0 {
            return Err(Error::InvalidScenario {
                reason: format!("prune threshold must be finite and nonnegative, got {prune}"),
            });
        }
        self.prune = prune;
        Ok(self)
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidScenario {
                reason: "horizon must be at least 1".into(),
            });
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_variant(mut self, variant: KernelVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn site_dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn symbol_count(&self) -> usize {
        self.partition.len()
    }

    /// k^horizon, saturating at u64::MAX.
    pub fn word_count(&self) -> u64 {
        let k = self.symbol_count() as u64;
        if k <= 1 {
            return k;
        }
        let mut total: u64 = 1;
        for _ in 0..self.horizon {
            total = match total.checked_mul(k) {
                Some(t) => t,
                None => return u64::MAX,
            };
        }
        total
    }

    /// Exact enumeration (prune = 0) of more than `cap` words is rejected up front.
    pub(crate) fn check_enumeration(&self) -> Result<()> {
        if self.prune <= 0.0 && self.word_count() > self.cap {
            return Err(Error::EnumerationCapExceeded {
                horizon: self.horizon,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// Initial positive operator of the branch recursion. The second ordering
    /// shifts every exponent up by one, which conjugates the seed once.
    pub(crate) fn seed(&self) -> OperatorMatrix {
        match self.variant {
            KernelVariant::Aow => self.rho.clone(),
            KernelVariant::Car => self.automorphism.predual(&self.rho),
        }
    }
}

/// Sums the diagonal blocks of an operator on the d x dim_a block structure.
#[allow(non_snake_case)]
pub fn map_E_e(x: &OperatorMatrix, d: usize, dim_a: usize) -> Result<OperatorMatrix> {
    if d == 0 || dim_a == 0 {
        return Err(Error::DimensionMismatch {
            context: "map_E_e block structure",
            expected: 1,
            found: 0,
        });
    }
    let rows = require_square(x, "map_E_e input")?;
    let expected = d.checked_mul(dim_a).ok_or_else(|| {
        Error::DimensionOverflow(format!("{d} x {dim_a} blocks overflow the address space"))
    })?;
    if rows != expected {
        return Err(Error::DimensionMismatch {
            context: "map_E_e input",
            expected,
            found: rows,
        });
    }
    let mut out = OperatorMatrix::zeros(dim_a, dim_a);
    for i in 0..d {
        out += x.view((i * dim_a, i * dim_a), (dim_a, dim_a)).into_owned();
    }
    Ok(out)
}

/// Transition expectation: x on the k*s block algebra maps to
/// theta(sum_j gamma_j† x_jj gamma_j) on the site algebra, where x_jj is the
/// j-th diagonal block. Completely positive and identity-preserving for every
/// valid partition kind.
pub fn transition_expectation(
    p: &Partition,
    th: &Automorphism,
    x: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    let k = p.len();
    let s = p.dim();
    if th.dim() != s {
        return Err(Error::DimensionMismatch {
            context: "transition_expectation automorphism",
            expected: s,
            found: th.dim(),
        });
    }
    let rows = require_square(x, "transition_expectation input")?;
    if rows != k * s {
        return Err(Error::DimensionMismatch {
            context: "transition_expectation input",
            expected: k * s,
            found: rows,
        });
    }
    let mut acc = OperatorMatrix::zeros(s, s);
    for (j, g) in p.elements().iter().enumerate() {
        let block = x.view((j * s, j * s), (s, s)).into_owned();
        acc += g.adjoint() * block * g;
    }
    Ok(th.apply(&acc))
}

/// sum_i theta(gamma_i† b gamma_i): the site-to-site step map of the chain.
pub fn kraus_twirl(p: &Partition, th: &Automorphism, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    let s = p.dim();
    if th.dim() != s {
        return Err(Error::DimensionMismatch {
            context: "kraus_twirl automorphism",
            expected: s,
            found: th.dim(),
        });
    }
    let rows = require_square(b, "kraus_twirl input")?;
    if rows != s {
        return Err(Error::DimensionMismatch {
            context: "kraus_twirl input",
            expected: s,
            found: rows,
        });
    }
    let mut acc = OperatorMatrix::zeros(s, s);
    for g in p.elements() {
        acc += g.adjoint() * b * g;
    }
    Ok(th.apply(&acc))
}

/// Tr(even part)/2 on the two-dimensional mode algebra whose grading unitary
/// is diag(1, -1). Odd operators have even part 0, hence weight exactly 0.
fn mode_even_weight(a: &OperatorMatrix) -> Complex64 {
    let grading = OperatorMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, -ONE]));
    let even = (a + &grading * a * &grading) * Complex64::new(0.5, 0.0);
    even.trace() * Complex64::new(0.5, 0.0)
}

/// One conditional-expectation step from a mode-tensor-site pair onto the
/// site: w(a) * sum_i theta(gamma_i† b gamma_i) with w(a) = Tr(even part)/2.
pub fn umegaki_step(
    p: &Partition,
    th: &Automorphism,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
) -> Result<OperatorMatrix> {
    let rows = require_square(a, "umegaki_step mode operator")?;
    if rows != 2 {
        return Err(Error::DimensionMismatch {
            context: "umegaki_step mode operator",
            expected: 2,
            found: rows,
        });
    }
    let twirl = kraus_twirl(p, th, b)?;
    Ok(twirl * mode_even_weight(a))
}

/// Nested chain evaluation of site operators a_1, ..., a_n (each k x k):
/// X_{n+1} = 1, X_t = transition_expectation(a_t tensor X_{t+1}),
/// returning Tr(rho X_1).
pub fn nested_expectation(
    p: &Partition,
    th: &Automorphism,
    rho: &OperatorMatrix,
    site_ops: &[OperatorMatrix],
) -> Result<Complex64> {
    let k = p.len();
    let s = p.dim();
    let rows = require_square(rho, "nested_expectation density")?;
    if rows != s {
        return Err(Error::DimensionMismatch {
            context: "nested_expectation density",
            expected: s,
            found: rows,
        });
    }
    let mut x = OperatorMatrix::identity(s, s);
    for a in site_ops.iter().rev() {
        let d = require_square(a, "nested_expectation site operator")?;
        if d != k {
            return Err(Error::DimensionMismatch {
                context: "nested_expectation site operator",
                expected: k,
                found: d,
            });
        }
        x = transition_expectation(p, th, &linalg::kron(a, &x))?;
    }
    Ok((rho * x).trace())
}

/// Joint state of the length-n chain in structured (block) form.
///
/// Dense joints grow as k^n times the site dimension, so the state is stored
/// exactly in the shape the construction produces and densified only on
/// demand under [`DENSE_DIM_CAP`].
#[derive(Clone, Debug)]
pub enum JointState {
    /// sum_w E_w tensor block_w with E_w the matrix-unit diagonal of the word
    /// and block_w the branch operator; words absent from the map carry 0.
    BlockDiagonal {
        symbol_count: usize,
        horizon: usize,
        site_dim: usize,
        blocks: BTreeMap<IndexWord, OperatorMatrix>,
    },
    /// (1/2^n) I tensor factor: one two-dimensional mode per step whose even
    /// component carries no information, so the mode part is exactly uniform.
    UniformTensor {
        mode_count: usize,
        factor: OperatorMatrix,
    },
}

/// Marginal of the chain state over the site algebra.
#[derive(Clone, Debug)]
pub enum MarginalState {
    /// Diagonal in the word basis: sum_w P_w E_w.
    WordDiagonal {
        symbol_count: usize,
        horizon: usize,
        probs: BTreeMap<IndexWord, f64>,
    },
    /// (trace / 2^mode_count) I.
    Uniform { mode_count: usize, trace: f64 },
}

/// Joint and marginal states at a fixed horizon, plus the mass pruned away
/// during construction (zero unless the scenario prunes).
#[derive(Clone, Debug)]
pub struct ChainState {
    pub horizon: usize,
    pub variant: KernelVariant,
    pub joint: JointState,
    pub marginal: MarginalState,
    pub pruned_mass: f64,
}

/// Density-operator checks of a chain state: Hermiticity, trace (accounting
/// for pruned mass), and spectrum floor of both the joint and the marginal.
#[derive(Clone, Debug)]
pub struct DensityReport {
    pub hermitian_deviation: f64,
    pub joint_trace_deviation: f64,
    pub joint_min_eigenvalue: f64,
    pub marginal_trace_deviation: f64,
    pub marginal_min_eigenvalue: f64,
    pub psd_floor: f64,
    pub trace_tol: f64,
}

impl DensityReport {
    pub fn passes(&self) -> bool {
        self.hermitian_deviation <= HERMITIAN_TOL
            && self.joint_trace_deviation <= self.trace_tol
            && self.marginal_trace_deviation <= self.trace_tol
            && self.joint_min_eigenvalue >= self.psd_floor
            && self.marginal_min_eigenvalue >= self.psd_floor
    }
}

impl fmt::Display for DensityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hermitian {:.3e}; joint trace {:.3e}, min eig {:.3e}; marginal trace {:.3e}, min eig {:.3e}: {}",
            self.hermitian_deviation,
            self.joint_trace_deviation,
            self.joint_min_eigenvalue,
            self.marginal_trace_deviation,
            self.marginal_min_eigenvalue,
            if self.passes() { "pass" } else { "FAIL" }
        )
    }
}

/// Smallest eigenvalue, or NaN when the matrix is too far from Hermitian to
/// diagonalize; NaN then fails every floor comparison.
fn min_eigenvalue_or_nan(m: &OperatorMatrix) -> f64 {
    match linalg::hermitian_eig(m) {
        Ok(spectrum) => spectrum.eigenvalues.first().copied().unwrap_or(0.0),
        Err(_) => f64::NAN,
    }
}

fn checked_pow_usize(base: usize, exp: usize, what: &str) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..exp {
        total = total
            .checked_mul(base)
            .ok_or_else(|| Error::DimensionOverflow(format!("{what} overflows usize")))?;
    }
    Ok(total)
}

fn dense_guard(dim: usize, what: &str) -> Result<()> {
    if dim > DENSE_DIM_CAP {
        return Err(Error::DimensionOverflow(format!(
            "{what} has dimension {dim}, above the dense-view cap {DENSE_DIM_CAP}"
        )));
    }
    Ok(())
}

/// Dense index of a word: symbol t sits at significance k^(t-1), so the last
/// symbol is the most significant digit, matching E_w = e_{i_n} ⊗ ... ⊗ e_{i_1}.
fn word_dense_index(word: &IndexWord, symbol_count: usize) -> usize {
    let mut idx = 0usize;
    for (t, &sym) in word.symbols().iter().enumerate() {
        idx += (sym as usize - 1) * symbol_count.pow(t as u32);
    }
    idx
}

impl ChainState {
    /// Structure-aware density checks; exact on the stored representation.
    pub fn density_report(&self) -> DensityReport {
        let (hermitian_joint, joint_trace, joint_min) = match &self.joint {
            JointState::BlockDiagonal {
                symbol_count,
                horizon,
                blocks,
                ..
            } => {
                let mut herm: f64 = 0.0;
                let mut trace = 0.0;
                let mut min_eig = f64::INFINITY;
                for block in blocks.values() {
                    herm = herm.max(linalg::hermitian_deviation(block));
                    trace += block.trace().re;
                    min_eig = min_eig.min(min_eigenvalue_or_nan(block));
                }
                let full = (*symbol_count as u64).checked_pow(*horizon as u32);
                let missing_words = full.is_none_or(|n| (blocks.len() as u64) < n);
                if missing_words || blocks.is_empty() {
                    min_eig = min_eig.min(0.0);
                }
                (herm, trace, min_eig)
            }
            JointState::UniformTensor { mode_count, factor } => {
                let scale = (*mode_count as f64).exp2();
                (
                    linalg::hermitian_deviation(factor),
                    factor.trace().re,
                    min_eigenvalue_or_nan(factor) / scale,
                )
            }
        };
        let (marginal_trace, marginal_min) = match &self.marginal {
            MarginalState::WordDiagonal {
                symbol_count,
                horizon,
                probs,
            } => {
                let trace: f64 = probs.values().sum();
                let mut min_eig = probs.values().copied().fold(f64::INFINITY, f64::min);
                let full = (*symbol_count as u64).checked_pow(*horizon as u32);
                if full.is_none_or(|n| (probs.len() as u64) < n) || probs.is_empty() {
                    min_eig = min_eig.min(0.0);
                }
                (trace, min_eig)
            }
            MarginalState::Uniform { mode_count, trace } => {
                (*trace, *trace / (*mode_count as f64).exp2())
            }
        };
        DensityReport {
            hermitian_deviation: hermitian_joint,
            joint_trace_deviation: (joint_trace + self.pruned_mass - 1.0).abs(),
            joint_min_eigenvalue: joint_min,
            marginal_trace_deviation: (marginal_trace + self.pruned_mass - 1.0).abs(),
            marginal_min_eigenvalue: marginal_min,
            psd_floor: EIG_CLAMP_FLOOR,
            trace_tol: DENSITY_TOL,
        }
    }

    /// Word probabilities of the marginal, when it is word-diagonal.
    pub fn marginal_probs(&self) -> Option<&BTreeMap<IndexWord, f64>> {
        match &self.marginal {
            MarginalState::WordDiagonal { probs, .. } => Some(probs),
            MarginalState::Uniform { .. } => None,
        }
    }

    /// Dense joint state; guarded by [`DENSE_DIM_CAP`].
    pub fn joint_dense(&self) -> Result<OperatorMatrix> {
        match &self.joint {
            JointState::BlockDiagonal {
                symbol_count,
                horizon,
                site_dim,
                blocks,
            } => {
                let words = checked_pow_usize(*symbol_count, *horizon, "joint word space")?;
                let total = words
                    .checked_mul(*site_dim)
                    .ok_or_else(|| Error::DimensionOverflow("joint state".into()))?;
                dense_guard(total, "joint state")?;
                let mut out = OperatorMatrix::zeros(total, total);
                for (word, block) in blocks {
                    let offset = word_dense_index(word, *symbol_count) * site_dim;
                    out.view_mut((offset, offset), (*site_dim, *site_dim))
                        .copy_from(block);
                }
                Ok(out)
            }
            JointState::UniformTensor { mode_count, factor } => {
                let modes = checked_pow_usize(2, *mode_count, "mode space")?;
                let total = modes
                    .checked_mul(factor.nrows())
                    .ok_or_else(|| Error::DimensionOverflow("joint state".into()))?;
                dense_guard(total, "joint state")?;
                let uniform = OperatorMatrix::identity(modes, modes).unscale(modes as f64);
                Ok(linalg::kron(&uniform, factor))
            }
        }
    }

    /// Dense marginal state; guarded by [`DENSE_DIM_CAP`].
    pub fn marginal_dense(&self) -> Result<OperatorMatrix> {
        match &self.marginal {
            MarginalState::WordDiagonal {
                symbol_count,
                horizon,
                probs,
            } => {
                let total = checked_pow_usize(*symbol_count, *horizon, "marginal word space")?;
                dense_guard(total, "marginal state")?;
                let mut out = OperatorMatrix::zeros(total, total);
                for (word, p) in probs {
                    let idx = word_dense_index(word, *symbol_count);
                    out[(idx, idx)] = Complex64::new(*p, 0.0);
                }
                Ok(out)
            }
            MarginalState::Uniform { mode_count, trace } => {
                let total = checked_pow_usize(2, *mode_count, "marginal mode space")?;
                dense_guard(total, "marginal state")?;
                Ok(OperatorMatrix::identity(total, total) * Complex64::new(trace / total as f64, 0.0))
            }
        }
    }

    /// Tr(marginal * (a_n tensor ... tensor a_1)) without densifying; the
    /// t-th supplied operator sits on the t-th chain slot.
    pub fn marginal_expectation(&self, site_ops: &[OperatorMatrix]) -> Result<Complex64> {
        if site_ops.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "marginal_expectation operator count",
                expected: self.horizon,
                found: site_ops.len(),
            });
        }
        match &self.marginal {
            MarginalState::WordDiagonal {
                symbol_count,
                probs,
                ..
            } => {
                for a in site_ops {
                    let d = require_square(a, "marginal_expectation site operator")?;
                    if d != *symbol_count {
                        return Err(Error::DimensionMismatch {
                            context: "marginal_expectation site operator",
                            expected: *symbol_count,
                            found: d,
                        });
                    }
                }
                let mut total = Complex64::new(0.0, 0.0);
                for (word, p) in probs {
                    let mut coeff = Complex64::new(*p, 0.0);
                    for (t, &sym) in word.symbols().iter().enumerate() {
                        let i = sym as usize - 1;
                        coeff *= site_ops[t][(i, i)];
                    }
                    total += coeff;
                }
                Ok(total)
            }
            MarginalState::Uniform { mode_count, trace } => {
                let mut coeff = Complex64::new(trace / (*mode_count as f64).exp2(), 0.0);
                for a in site_ops {
                    let d = require_square(a, "marginal_expectation mode operator")?;
                    if d != 2 {
                        return Err(Error::DimensionMismatch {
                            context: "marginal_expectation mode operator",
                            expected: 2,
                            found: d,
                        });
                    }
                    coeff *= a.trace();
                }
                Ok(coeff)
            }
        }
    }
}

/// Collects every retained branch block keyed by its word.
struct BlockCollector;

impl LeafVisitor for BlockCollector {
    type Acc = Vec<(IndexWord, OperatorMatrix)>;

    fn empty(&self) -> Self::Acc {
        Vec::new()
    }

    fn visit(&self, acc: &mut Self::Acc, word: &IndexWord, _weight: f64, block: &OperatorMatrix) {
        acc.push((word.clone(), block.clone()));
    }

    fn merge(&self, mut left: Self::Acc, mut right: Self::Acc) -> Self::Acc {
        left.append(&mut right);
        left
    }
}

/// Sums the retained branch blocks; merge order is the symbol order, so the
/// floating-point sum is reproducible.
struct BlockSummer {
    dim: usize,
}

impl LeafVisitor for BlockSummer {
    type Acc = OperatorMatrix;

    fn empty(&self) -> Self::Acc {
        OperatorMatrix::zeros(self.dim, self.dim)
    }

    fn visit(&self, acc: &mut Self::Acc, _word: &IndexWord, _weight: f64, block: &OperatorMatrix) {
        *acc += block;
    }

    fn merge(&self, left: Self::Acc, right: Self::Acc) -> Self::Acc {
        left + right
    }
}

/// Builds the joint and marginal states at the scenario's horizon.
///
/// Chain states materialize every retained word, so the full word count must
/// fit the enumeration cap regardless of pruning.
pub fn chain_joint_state(s: &Scenario) -> Result<ChainState> {
    if s.word_count() > s.cap {
        return Err(Error::EnumerationCapExceeded {
            horizon: s.horizon,
            cap: s.cap,
        });
    }
    let k = s.symbol_count();
    let n = s.horizon;
    match s.variant {
        KernelVariant::Aow => {
            let run = propagate_leaves(s, &BlockCollector)?;
            let mut blocks = BTreeMap::new();
            let mut probs = BTreeMap::new();
            for (word, block) in run.acc {
                probs.insert(word.clone(), block.trace().re.max(0.0));
                blocks.insert(word, block);
            }
            Ok(ChainState {
                horizon: n,
                variant: s.variant,
                joint: JointState::BlockDiagonal {
                    symbol_count: k,
                    horizon: n,
                    site_dim: s.site_dim(),
                    blocks,
                },
                marginal: MarginalState::WordDiagonal {
                    symbol_count: k,
                    horizon: n,
                    probs,
                },
                pruned_mass: run.pruned_mass,
            })
        }
        KernelVariant::Car => {
            let run = propagate_leaves(s, &BlockSummer { dim: s.site_dim() })?;
            let un = s.automorphism.power(n);
            let factor = &un * run.acc * un.adjoint();
            let trace = factor.trace().re;
            Ok(ChainState {
                horizon: n,
                variant: s.variant,
                joint: JointState::UniformTensor {
                    mode_count: n,
                    factor,
                },
                marginal: MarginalState::Uniform {
                    mode_count: n,
                    trace,
                },
                pruned_mass: run.pruned_mass,
            })
        }
    }
}
