//! Correlation-kernel tables over index words, the entropy sequence S_n, and
//! finite-horizon rate estimation.
//!
//! P(w) = Tr(Gamma_w rho Gamma_w†) for the ordered product Gamma_w of evolved
//! partition elements. Tables are computed by depth-first propagation of the
//! prefix-conditioned positive operator rho_w (weight = Tr rho_w), which is
//! numerically stabler than materializing Gamma_w and enables pruning;
//! agreement with the literal product form is itself a test.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{chain_joint_state, Automorphism, KernelVariant, Partition, Scenario};
use crate::error::{Error, Result};
use crate::linalg::{self, OperatorMatrix, PROB_FLOOR, PROB_SUM_TOL};

/// Word of 1-based partition symbols indexing a chain branch.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexWord {
    symbols: Vec<u16>,
}

impl IndexWord {
    /// Validates length >= 1 and every symbol in 1..=symbol_count.
    pub fn new(symbols: Vec<u16>, symbol_count: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidWord {
                reason: "words must have at least one symbol".into(),
            });
        }
        for &s in &symbols {
            if s == 0 || s as usize > symbol_count {
                return Err(Error::InvalidWord {
                    reason: format!("symbol {s} outside 1..={symbol_count}"),
                });
            }
        }
        Ok(Self { symbols })
    }

    /// The constant word (symbol, symbol, ..., symbol) of the given length.
    pub fn constant(symbol: u16, len: usize, symbol_count: usize) -> Result<Self> {
        Self::new(vec![symbol; len], symbol_count)
    }

    pub(crate) fn from_symbols_unchecked(symbols: Vec<u16>) -> Self {
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[u16] {
        &self.symbols
    }

    /// Digit concatenation when every symbol of the alphabet is one digit,
    /// hyphen-separated otherwise; the alphabet size keeps labels unambiguous.
    pub fn label(&self, symbol_count: usize) -> String {
        if symbol_count <= 9 {
            self.symbols.iter().map(u16::to_string).collect()
        } else {
            self.joined()
        }
    }

    fn joined(&self) -> String {
        self.symbols
            .iter()
            .map(u16::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Receives each retained leaf of the branch recursion in depth-first order.
/// Accumulators merge in first-symbol order, so results are reproducible
/// regardless of thread scheduling.
pub(crate) trait LeafVisitor: Sync {
    type Acc: Send;

    fn empty(&self) -> Self::Acc;

    fn visit(&self, acc: &mut Self::Acc, word: &IndexWord, weight: f64, block: &OperatorMatrix);

    fn merge(&self, left: Self::Acc, right: Self::Acc) -> Self::Acc;
}

/// Outcome of a branch propagation: merged accumulator and the mass dropped
/// by the prune threshold.
pub(crate) struct Propagated<A> {
    pub acc: A,
    pub pruned_mass: f64,
}

/// Depth-first propagation of the prefix-conditioned operators.
///
/// rho_(i) = gamma_i seed gamma_i† and
/// rho_(w,j) = gamma_j (U† rho_w U) gamma_j†; the weight of a branch is
/// Tr rho_w. Branches with weight strictly below the prune threshold are
/// dropped and their weight accumulated. Work is split across the first
/// symbol; each subtree is walked sequentially and merged in symbol order.
pub(crate) fn propagate_leaves<V: LeafVisitor>(
    s: &Scenario,
    visitor: &V,
) -> Result<Propagated<V::Acc>> {
    let k = s.symbol_count();
    let seed = s.seed();
    let adjoints: Vec<OperatorMatrix> = s
        .partition
        .elements()
        .iter()
        .map(OperatorMatrix::adjoint)
        .collect();
    let walk_subtree = |first: usize| -> Result<(V::Acc, f64, u64)> {
        let mut acc = visitor.empty();
        let mut pruned = 0.0f64;
        let mut count = 0u64;
        let mut word: Vec<u16> = Vec::with_capacity(s.horizon);
        let block = s.partition.element(first) * &seed * &adjoints[first];
        descend(
            s, visitor, &adjoints, first, block, &mut word, &mut acc, &mut pruned, &mut count,
        )?;
        Ok((acc, pruned, count))
    };
    let results: Vec<Result<(V::Acc, f64, u64)>> = if k > 1 {
        (0..k).into_par_iter().map(walk_subtree).collect()
    } else {
        (0..k).map(walk_subtree).collect()
    };
    let mut acc = visitor.empty();
    let mut pruned_mass = 0.0;
    let mut leaf_count = 0u64;
    for subtree in results {
        let (sub_acc, sub_pruned, sub_count) = subtree?;
        acc = visitor.merge(acc, sub_acc);
        pruned_mass += sub_pruned;
        leaf_count = leaf_count.saturating_add(sub_count);
        if leaf_count > s.cap {
            return Err(Error::EnumerationCapExceeded {
                horizon: s.horizon,
                cap: s.cap,
            });
        }
    }
    Ok(Propagated { acc, pruned_mass })
}

#[allow(clippy::too_many_arguments)]
fn descend<V: LeafVisitor>(
    s: &Scenario,
    visitor: &V,
    adjoints: &[OperatorMatrix],
    symbol0: usize,
    block: OperatorMatrix,
    word: &mut Vec<u16>,
    acc: &mut V::Acc,
    pruned: &mut f64,
    count: &mut u64,
) -> Result<()> {
    let weight = block.trace().re;
    if weight < PROB_FLOOR {
        word.push((symbol0 + 1) as u16);
        let label = IndexWord::from_symbols_unchecked(word.clone()).joined();
        word.pop();
        return Err(Error::InvalidProbabilities {
            reason: format!(
                "branch weight {weight:.6e} at word {label} is below the floor {PROB_FLOOR:.1e}"
            ),
        });
    }
    if weight < s.prune {
        *pruned += weight.max(0.0);
        return Ok(());
    }
    word.push((symbol0 + 1) as u16);
    if word.len() == s.horizon {
        *count += 1;
        if *count > s.cap {
            word.pop();
            return Err(Error::EnumerationCapExceeded {
                horizon: s.horizon,
                cap: s.cap,
            });
        }
        let leaf_word = IndexWord::from_symbols_unchecked(word.clone());
        visitor.visit(acc, &leaf_word, weight.max(0.0), &block);
    } else {
        let carry = s.automorphism.predual(&block);
        for j in 0..s.symbol_count() {
            let child = s.partition.element(j) * &carry * &adjoints[j];
            descend(s, visitor, adjoints, j, child, word, acc, pruned, count)?;
        }
    }
    word.pop();
    Ok(())
}

struct WeightCollector;

impl LeafVisitor for WeightCollector {
    type Acc = Vec<(IndexWord, f64)>;

    fn empty(&self) -> Self::Acc {
        Vec::new()
    }

    fn visit(&self, acc: &mut Self::Acc, word: &IndexWord, weight: f64, _block: &OperatorMatrix) {
        acc.push((word.clone(), weight));
    }

    fn merge(&self, mut left: Self::Acc, mut right: Self::Acc) -> Self::Acc {
        left.append(&mut right);
        left
    }
}

/// Word probabilities at one horizon, plus the mass pruned during the walk.
#[derive(Clone, Debug)]
pub struct KernelTable {
    pub horizon: usize,
    pub symbol_count: usize,
    pub variant: KernelVariant,
    pub entries: BTreeMap<IndexWord, f64>,
    pub pruned_mass: f64,
}

impl KernelTable {
    /// Sum of the retained entries, in fixed word order.
    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    /// |retained + pruned - 1|.
    pub fn normalization_deviation(&self) -> f64 {
        (self.total_mass() + self.pruned_mass - 1.0).abs()
    }

    /// Checks nonnegativity and the normalization identity within 1e-10.
    pub fn validate(&self) -> Result<()> {
        for (word, &p) in &self.entries {
            if !(p >= 0.0) {
                return Err(Error::InvalidProbabilities {
                    reason: format!("entry {} = {p:.6e} is negative", word.joined()),
                });
            }
        }
        if self.pruned_mass < 0.0 {
            return Err(Error::InvalidProbabilities {
                reason: format!("pruned mass {:.6e} is negative", self.pruned_mass),
            });
        }
        let dev = self.normalization_deviation();
        if dev > PROB_SUM_TOL {
            return Err(Error::InvalidProbabilities {
                reason: format!(
                    "retained {:.15} + pruned {:.3e} deviates from 1 by {dev:.3e}",
                    self.total_mass(),
                    self.pruned_mass
                ),
            });
        }
        Ok(())
    }

    /// -sum P ln P over the retained entries, after validating the table.
    pub fn entropy(&self) -> Result<f64> {
        self.validate()?;
        let values: Vec<f64> = self.entries.values().copied().collect();
        Ok(linalg::entropy_of_clamped(&values, PROB_FLOOR).max(0.0))
    }

    /// Probability of a word; absent words carry 0.
    pub fn probability(&self, word: &IndexWord) -> f64 {
        self.entries.get(word).copied().unwrap_or(0.0)
    }

    /// Table label for a word (alphabet-size aware).
    pub fn word_label(&self, word: &IndexWord) -> String {
        word.label(self.symbol_count)
    }

    /// Sums out the last symbol, yielding the horizon-(n-1) distribution the
    /// telescoping identity predicts.
    pub fn marginalize_last(&self) -> Result<KernelTable> {
        if self.horizon < 2 {
            return Err(Error::InvalidWord {
                reason: "cannot marginalize a horizon-1 table".into(),
            });
        }
        let mut entries: BTreeMap<IndexWord, f64> = BTreeMap::new();
        for (word, &p) in &self.entries {
            let prefix = word.symbols()[..word.len() - 1].to_vec();
            *entries
                .entry(IndexWord::from_symbols_unchecked(prefix))
                .or_insert(0.0) += p;
        }
        Ok(KernelTable {
            horizon: self.horizon - 1,
            symbol_count: self.symbol_count,
            variant: self.variant,
            entries,
            pruned_mass: self.pruned_mass,
        })
    }
}

/// The ordered evolved product for a word. The first ordering uses exponents
/// n-1..0, the second n..1; powers come from the automorphism's cache.
pub fn gamma_word(
    p: &Partition,
    th: &Automorphism,
    word: &IndexWord,
    variant: KernelVariant,
) -> Result<OperatorMatrix> {
    if th.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            context: "gamma_word automorphism",
            expected: p.dim(),
            found: th.dim(),
        });
    }
    for &sym in word.symbols() {
        if sym == 0 || sym as usize > p.len() {
            return Err(Error::InvalidWord {
                reason: format!("symbol {sym} outside 1..={}", p.len()),
            });
        }
    }
    let shift = match variant {
        KernelVariant::Aow => 0,
        KernelVariant::Car => 1,
    };
    let dim = p.dim();
    let mut acc = OperatorMatrix::identity(dim, dim);
    for (t, &sym) in word.symbols().iter().enumerate().rev() {
        acc *= th.apply_power(t + shift, p.element(sym as usize - 1));
    }
    Ok(acc)
}

/// Kernel table of the scenario at its horizon.
pub fn kernel_table(s: &Scenario) -> Result<KernelTable> {
    s.check_enumeration()?;
    let run = propagate_leaves(s, &WeightCollector)?;
    Ok(KernelTable {
        horizon: s.horizon,
        symbol_count: s.symbol_count(),
        variant: s.variant,
        entries: run.acc.into_iter().collect(),
        pruned_mass: run.pruned_mass,
    })
}

/// Entropy sequence S_n for n = 1..=N (nats), with the running normalizations
/// S_n/n and increments S_n - S_{n-1} (S_0 := 0).
#[derive(Clone, Debug)]
pub struct EntropySeries {
    pub s: Vec<f64>,
    pub rates: Vec<f64>,
    pub diffs: Vec<f64>,
}

impl EntropySeries {
    pub fn horizon(&self) -> usize {
        self.s.len()
    }
}

/// Largest word space for which the diagonal-marginal entropy is re-derived
/// spectrally as a cross-check.
const SPECTRAL_CHECK_MAX_WORDS: u64 = 256;

/// S_n = entropy of the horizon-n kernel table, for n = 1..=max_horizon.
///
/// For the word-diagonal marginal ordering with exact enumeration on small
/// word spaces, S_n is re-derived as the von Neumann entropy of the dense
/// marginal; the two routes must agree to 1e-8.
pub fn entropy_series(s: &Scenario, max_horizon: usize) -> Result<EntropySeries> {
    if max_horizon == 0 {
        return Err(Error::InvalidScenario {
            reason: "entropy series needs a horizon of at least 1".into(),
        });
    }
    let ln_k = (s.symbol_count() as f64).ln();
    let mut values = Vec::with_capacity(max_horizon);
    for n in 1..=max_horizon {
        let sn = s.clone().with_horizon(n)?;
        let table = kernel_table(&sn)?;
        let entropy = table.entropy()?;
        if entropy > n as f64 * ln_k + 1e-9 {
            return Err(Error::InvalidProbabilities {
                reason: format!(
                    "entropy {entropy:.12} exceeds the bound n ln k = {:.12} at horizon {n}",
                    n as f64 * ln_k
                ),
            });
        }
        if sn.variant == KernelVariant::Aow
            && sn.prune == 0.0
            && sn.word_count() <= SPECTRAL_CHECK_MAX_WORDS
        {
            let chain = chain_joint_state(&sn)?;
            let spectral = linalg::von_neumann_entropy(&chain.marginal_dense()?)?;
            if (spectral - entropy).abs() > 1e-8 {
                return Err(Error::InvalidProbabilities {
                    reason: format!(
                        "entropy cross-check failed at horizon {n}: word route {entropy:.12} vs spectral route {spectral:.12}"
                    ),
                });
            }
        }
        values.push(entropy);
    }
    let rates = values
        .iter()
        .enumerate()
        .map(|(i, v)| v / (i + 1) as f64)
        .collect();
    let diffs = values
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 { *v } else { v - values[i - 1] })
        .collect();
    Ok(EntropySeries {
        s: values,
        rates,
        diffs,
    })
}

/// Finite-horizon rate estimates. `rate` is the tail increment S_N - S_{N-1};
/// `normalized` is S_N / N. No convergence is claimed; the series itself is
/// the diagnostic.
#[derive(Clone, Debug)]
pub struct RateEstimate {
    pub rate: f64,
    pub normalized: f64,
    pub horizon: usize,
    pub series: EntropySeries,
}

impl fmt::Display for RateEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tail increment S_{n} - S_{m} = {rate}; normalized S_{n}/{n} = {norm} (finite-horizon estimates)",
            n = self.horizon,
            m = self.horizon - 1,
            rate = self.rate,
            norm = self.normalized,
        )
    }
}

/// Requires at least three horizons so the tail increment is not dominated by
/// the opening transient.
pub fn rate_estimate(series: &EntropySeries) -> Result<RateEstimate> {
    let n = series.s.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { need: 3, got: n });
    }
    Ok(RateEstimate {
        rate: series.s[n - 1] - series.s[n - 2],
        normalized: series.s[n - 1] / n as f64,
        horizon: n,
        series: series.clone(),
    })
}

/// Exact path probabilities of a classical Markov chain: an independent
/// oracle for the diagonal reductions of the kernel.
pub fn classical_oracle_kernel(
    transition: &DMatrix<f64>,
    initial: &[f64],
    horizon: usize,
) -> Result<BTreeMap<IndexWord, f64>> {
    let d = transition.nrows();
    if transition.ncols() != d {
        return Err(Error::NotSquare {
            context: "stochastic matrix",
            rows: d,
            cols: transition.ncols(),
        });
    }
    if d == 0 {
        return Err(Error::InvalidStochastic {
            reason: "transition matrix is empty".into(),
        });
    }
    for r in 0..d {
        let mut sum = 0.0;
        for c in 0..d {
            let v = transition[(r, c)];
            if !(v >= 0.0) {
                return Err(Error::InvalidStochastic {
                    reason: format!("entry ({r},{c}) = {v} is not nonnegative"),
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidStochastic {
                reason: format!("row {r} sums to {sum:.15}, not 1"),
            });
        }
    }
    if initial.len() != d {
        return Err(Error::DimensionMismatch {
            context: "oracle initial distribution",
            expected: d,
            found: initial.len(),
        });
    }
    for (i, &v) in initial.iter().enumerate() {
        if !(v >= 0.0) {
            return Err(Error::InvalidProbabilities {
                reason: format!("initial entry {i} = {v} is not nonnegative"),
            });
        }
    }
    let total: f64 = initial.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidProbabilities {
            reason: format!("initial distribution sums to {total:.15}, not 1"),
        });
    }
    if horizon == 0 {
        return Err(Error::InvalidScenario {
            reason: "oracle horizon must be at least 1".into(),
        });
    }
    let mut words: u64 = 1;
    for _ in 0..horizon {
        words = words
            .checked_mul(d as u64)
            .filter(|&w| w <= crate::dynamics::DEFAULT_ENUMERATION_CAP)
            .ok_or(Error::EnumerationCapExceeded {
                horizon,
                cap: crate::dynamics::DEFAULT_ENUMERATION_CAP,
            })?;
    }
    let mut out = BTreeMap::new();
    let mut word = Vec::with_capacity(horizon);
    extend_paths(transition, initial, horizon, &mut word, 1.0, &mut out);
    Ok(out)
}

fn extend_paths(
    transition: &DMatrix<f64>,
    initial: &[f64],
    horizon: usize,
    word: &mut Vec<u16>,
    prob: f64,
    out: &mut BTreeMap<IndexWord, f64>,
) {
    if word.len() == horizon {
        out.insert(IndexWord::from_symbols_unchecked(word.clone()), prob);
        return;
    }
    for j in 0..initial.len() {
        let next = match word.last() {
            None => initial[j],
            Some(&prev) => prob * transition[(prev as usize - 1, j)],
        };
        word.push((j + 1) as u16);
        extend_paths(transition, initial, horizon, word, next, out);
        word.pop();
    }
}

/// Shannon entropy (nats) of a word distribution that must sum to 1.
pub fn word_distribution_entropy(dist: &BTreeMap<IndexWord, f64>) -> Result<f64> {
    let values: Vec<f64> = dist.values().copied().collect();
    linalg::shannon_entropy(&values)
}
