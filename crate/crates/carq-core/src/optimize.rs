//! Supremum of the finite-horizon rate over parameterized partition
//! families: a coarse inclusive grid followed by per-axis golden-section
//! refinement, all under one evaluation budget.
//!
//! Every evaluation is recorded, the incumbent only moves on strict
//! improvement, and the grid is scanned in lexicographic parameter order, so
//! ties resolve to the lex-lowest parameters and reruns are reproducible.

use std::fmt;

use crate::dynamics::{
    Automorphism, KernelVariant, Partition, Scenario, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::kernel::{entropy_series, rate_estimate};
use crate::linalg::OperatorMatrix;
use num_complex::Complex64;

/// Grid resolution per non-degenerate axis.
pub const GRID_POINTS_PER_AXIS: usize = 32;

/// Refinement stops once a bracket is narrower than this.
const REFINE_WIDTH_TOL: f64 = 1e-8;

/// Inverse golden ratio, the section constant.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Builds a partition from a parameter point.
pub type PartitionGenerator = Box<dyn Fn(&[f64]) -> Result<Partition> + Send + Sync>;

/// Box-constrained family of partitions indexed by real parameters.
pub struct PartitionFamily {
    bounds: Vec<(f64, f64)>,
    generator: PartitionGenerator,
}

impl PartitionFamily {
    /// Bounds must be finite with lo <= hi; equal endpoints pin an axis.
    pub fn new(bounds: Vec<(f64, f64)>, generator: PartitionGenerator) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidFamily {
                params: vec![],
                reason: "a family needs at least one parameter axis".into(),
            });
        }
        for &(lo, hi) in &bounds {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidFamily {
                    params: vec![],
                    reason: format!("invalid axis bounds ({lo}, {hi})"),
                });
            }
        }
        Ok(Self { bounds, generator })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn param_count(&self) -> usize {
        self.bounds.len()
    }

    /// Runs the generator; any failure is reported with the offending
    /// parameters attached.
    pub fn generate(&self, params: &[f64]) -> Result<Partition> {
        if params.len() != self.bounds.len() {
            return Err(Error::InvalidFamily {
                params: params.to_vec(),
                reason: format!(
                    "expected {} parameters, got {}",
                    self.bounds.len(),
                    params.len()
                ),
            });
        }
        (self.generator)(params).map_err(|e| Error::InvalidFamily {
            params: params.to_vec(),
            reason: e.to_string(),
        })
    }
}

impl fmt::Debug for PartitionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartitionFamily")
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

/// Scenario with the partition left open, to be filled by a family.
#[derive(Clone, Debug)]
pub struct ScenarioTemplate {
    pub rho: OperatorMatrix,
    pub automorphism: Automorphism,
    pub variant: KernelVariant,
    pub prune: f64,
    pub cap: u64,
}

impl ScenarioTemplate {
    pub fn new(rho: OperatorMatrix, automorphism: Automorphism, variant: KernelVariant) -> Self {
        Self {
            rho,
            automorphism,
            variant,
            prune: 0.0,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    /// Completes the template with a concrete partition.
    pub fn instantiate(&self, partition: Partition, horizon: usize) -> Result<Scenario> {
        Ok(Scenario::new(
            self.rho.clone(),
            partition,
            self.automorphism.clone(),
            self.variant,
            horizon,
        )?
        .with_prune(self.prune)?
        .with_cap(self.cap))
    }
}

/// Phase that produced an evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPhase {
    Grid,
    Refine,
}

/// One objective evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub params: Vec<f64>,
    pub rate: f64,
    pub phase: EvalPhase,
}

/// Result of a family supremum: the incumbent dominates every recorded
/// evaluation, in particular `best_rate >= grid_max`.
#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub best_params: Vec<f64>,
    pub best_rate: f64,
    pub grid_max: f64,
    pub trace: Vec<Evaluation>,
}

struct Search<'a> {
    template: &'a ScenarioTemplate,
    family: &'a PartitionFamily,
    horizon: usize,
    remaining: usize,
    trace: Vec<Evaluation>,
}

impl Search<'_> {
    /// Evaluates the tail-increment rate at one parameter point, spending one
    /// unit of budget. Callers must check the budget beforehand.
    fn evaluate(&mut self, params: &[f64], phase: EvalPhase) -> Result<f64> {
        debug_assert!(self.remaining > 0);
        self.remaining -= 1;
        let partition = self.family.generate(params)?;
        let scenario = self.template.instantiate(partition, self.horizon)?;
        let series = entropy_series(&scenario, self.horizon)?;
        let rate = rate_estimate(&series)?.rate;
        if !rate.is_finite() {
            return Err(Error::InvalidScenario {
                reason: format!("objective is not finite at parameters {params:?}"),
            });
        }
        self.trace.push(Evaluation {
            params: params.to_vec(),
            rate,
            phase,
        });
        Ok(rate)
    }
}

/// Per-axis inclusive grid; a degenerate axis contributes its single pinned
/// value.
fn axis_points(lo: f64, hi: f64) -> Vec<f64> {
    if lo == hi {
        return vec![lo];
    }
    let n = GRID_POINTS_PER_AXIS;
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Maximizes the finite-horizon rate over the family.
///
/// Scans the full grid (lexicographic parameter order), then refines the
/// incumbent one axis at a time by golden-section search in a bracket of one
/// grid spacing around it, clamped to the axis bounds. Every probe costs one
/// unit of the shared budget; the scan errors out up front if the budget
/// cannot cover the grid.
pub fn sup_over_family(
    template: &ScenarioTemplate,
    family: &PartitionFamily,
    horizon: usize,
    budget: usize,
) -> Result<OptimizeResult> {
    let axes: Vec<Vec<f64>> = family
        .bounds()
        .iter()
        .map(|&(lo, hi)| axis_points(lo, hi))
        .collect();
    let required: usize = axes.iter().map(Vec::len).product();
    if budget < required {
        return Err(Error::BudgetTooSmall { budget, required });
    }
    let mut search = Search {
        template,
        family,
        horizon,
        remaining: budget,
        trace: Vec::new(),
    };

    // Lexicographic odometer over the grid; strict improvement keeps the
    // lex-lowest argmax.
    let mut best_params: Option<Vec<f64>> = None;
    let mut best_rate = f64::NEG_INFINITY;
    let mut index = vec![0usize; axes.len()];
    loop {
        let params: Vec<f64> = index.iter().zip(&axes).map(|(&i, ax)| ax[i]).collect();
        let rate = search.evaluate(&params, EvalPhase::Grid)?;
        if rate > best_rate {
            best_rate = rate;
            best_params = Some(params);
        }
        let mut axis = axes.len();
        loop {
            if axis == 0 {
                break;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < axes[axis].len() {
                break;
            }
            index[axis] = 0;
        }
        if index.iter().all(|&i| i == 0) {
            break;
        }
    }
    let mut best_params = best_params.expect("grid has at least one point");
    let grid_max = best_rate;

    for axis in 0..axes.len() {
        if search.remaining == 0 {
            break;
        }
        let (lo_bound, hi_bound) = family.bounds()[axis];
        if axes[axis].len() < 2 {
            continue;
        }
        let spacing = (hi_bound - lo_bound) / (axes[axis].len() - 1) as f64;
        let center = best_params[axis];
        let mut lo = (center - spacing).max(lo_bound);
        let mut hi = (center + spacing).min(hi_bound);
        let probe = |search: &mut Search, params: &mut Vec<f64>, x: f64| -> Result<Option<f64>> {
            if search.remaining == 0 {
                return Ok(None);
            }
            params[axis] = x;
            let rate = search.evaluate(params, EvalPhase::Refine)?;
            Ok(Some(rate))
        };
        let mut params = best_params.clone();
        let mut x1 = hi - INV_PHI * (hi - lo);
        let mut x2 = lo + INV_PHI * (hi - lo);
        let Some(mut f1) = probe(&mut search, &mut params, x1)? else {
            break;
        };
        if f1 > best_rate {
            best_rate = f1;
            best_params[axis] = x1;
        }
        let Some(mut f2) = probe(&mut search, &mut params, x2)? else {
            break;
        };
        if f2 > best_rate {
            best_rate = f2;
            best_params[axis] = x2;
        }
        while hi - lo > REFINE_WIDTH_TOL {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INV_PHI * (hi - lo);
                let Some(f) = probe(&mut search, &mut params, x2)? else {
                    break;
                };
                f2 = f;
                if f2 > best_rate {
                    best_rate = f2;
                    best_params[axis] = x2;
                }
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INV_PHI * (hi - lo);
                let Some(f) = probe(&mut search, &mut params, x1)? else {
                    break;
                };
                f1 = f;
                if f1 > best_rate {
                    best_rate = f1;
                    best_params[axis] = x1;
                }
            }
        }
    }

    Ok(OptimizeResult {
        best_params,
        best_rate,
        grid_max,
        trace: search.trace,
    })
}

/// Family of rank-1 projective partitions onto the columns of a cascade of
/// plane rotations G_{0,1}(phi_1) ... G_{d-2,d-1}(phi_{d-1}); parameters are
/// the d-1 rotation angles. At all angles the columns are orthonormal, so the
/// partition is always valid.
pub fn rotated_projective_family(dim: usize, bounds: Vec<(f64, f64)>) -> Result<PartitionFamily> {
    if dim < 2 {
        return Err(Error::InvalidFamily {
            params: vec![],
            reason: format!("rotated family needs dimension >= 2, got {dim}"),
        });
    }
    if bounds.len() != dim - 1 {
        return Err(Error::InvalidFamily {
            params: vec![],
            reason: format!(
                "rotated family in dimension {dim} takes {} angles, got {} bounds",
                dim - 1,
                bounds.len()
            ),
        });
    }
    let generator = move |params: &[f64]| -> Result<Partition> {
        let mut u = OperatorMatrix::identity(dim, dim);
        for (k, &phi) in params.iter().enumerate() {
            let mut g = OperatorMatrix::identity(dim, dim);
            let (s, c) = phi.sin_cos();
            g[(k, k)] = Complex64::new(c, 0.0);
            g[(k, k + 1)] = Complex64::new(-s, 0.0);
            g[(k + 1, k)] = Complex64::new(s, 0.0);
            g[(k + 1, k + 1)] = Complex64::new(c, 0.0);
            u *= g;
        }
        let elements = (0..dim)
            .map(|i| {
                let col = u.column(i);
                col * col.adjoint()
            })
            .collect();
        Partition::new(elements, crate::dynamics::PartitionKind::OrthogonalProjective)
    };
    PartitionFamily::new(bounds, Box::new(generator))
}
