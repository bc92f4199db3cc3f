//! Scenario files: one JSON document describing the algebra, the state, the
//! partition (fixed elements or a parameterized family), the automorphism
//! and the run parameters. Complex entries are [re, im] pairs and matrices
//! are row-major arrays of rows. Every parse error names the offending
//! field path.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde_json::{Map, Value};

use carq_core::dynamics::{Automorphism, KernelVariant, Partition, PartitionKind, Scenario};
use carq_core::linalg::{self, OperatorMatrix};
use carq_core::optimize::{rotated_projective_family, PartitionFamily, ScenarioTemplate};

use crate::{CliError, CliResult};

/// Logarithm base for reported entropies; tables are computed in nats and
/// rescaled at rendering time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBase {
    E,
    Two,
}

impl LogBase {
    pub fn divisor(self) -> f64 {
        match self {
            LogBase::E => 1.0,
            LogBase::Two => std::f64::consts::LN_2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LogBase::E => "nats",
            LogBase::Two => "bits",
        }
    }
}

/// Carrier algebra. `Car` fixes the dimension to 2^modes and gives the
/// phase preset its occupation-number meaning.
#[derive(Clone, Copy, Debug)]
pub enum AlgebraKind {
    Matrix { dim: usize },
    Car { modes: usize },
}

impl AlgebraKind {
    pub fn dim(self) -> usize {
        match self {
            AlgebraKind::Matrix { dim } => dim,
            AlgebraKind::Car { modes } => 1 << modes,
        }
    }
}

/// The partition half of a scenario: fixed elements or a family to optimize
/// over.
#[derive(Debug)]
pub enum PartitionSpec {
    Fixed(Partition),
    Family(PartitionFamily),
}

/// Fully parsed and validated scenario file.
#[derive(Debug)]
pub struct ScenarioFile {
    pub algebra: AlgebraKind,
    pub rho: OperatorMatrix,
    pub partition: PartitionSpec,
    pub automorphism: Automorphism,
    pub variant: KernelVariant,
    pub horizon: usize,
    pub prune: f64,
    pub log_base: LogBase,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("scenario: invalid JSON: {e}")))?;
        let root = as_object(&root, "scenario")?;
        check_keys(
            root,
            "scenario",
            &[
                "algebra",
                "rho",
                "partition",
                "automorphism",
                "variant",
                "horizon",
                "prune",
                "log_base",
            ],
        )?;
        let algebra = parse_algebra(required(root, "scenario", "algebra")?)?;
        let dim = algebra.dim();
        let rho = parse_rho(required(root, "scenario", "rho")?, dim)?;
        if let Some(reason) = linalg::density_violation(&rho, linalg::DENSITY_TOL) {
            return Err(CliError::Input(format!(
                "rho: not a density operator: {reason}"
            )));
        }
        let partition = parse_partition(required(root, "scenario", "partition")?, dim)?;
        let automorphism = parse_automorphism(required(root, "scenario", "automorphism")?, algebra)?;
        let variant_text = as_string(required(root, "scenario", "variant")?, "variant")?;
        let variant = KernelVariant::parse(variant_text)
            .map_err(|e| CliError::Input(format!("variant: {e}")))?;
        let horizon = as_usize(required(root, "scenario", "horizon")?, "horizon")?;
        if horizon == 0 {
            return Err(CliError::Input("horizon: must be at least 1".into()));
        }
        let prune = match optional(root, "prune") {
            None => 0.0,
            Some(v) => {
                let p = as_f64(v, "prune")?;
                if !p.is_finite() || p < 0.0 {
                    return Err(CliError::Input(format!(
                        "prune: must be a finite nonnegative number, got {p}"
                    )));
                }
                p
            }
        };
        let log_base = match optional(root, "log_base") {
            None => LogBase::E,
            Some(v) => match as_string(v, "log_base")? {
                "e" => LogBase::E,
                "2" => LogBase::Two,
                other => {
                    return Err(CliError::Input(format!(
                        "log_base: expected \"e\" or \"2\", got \"{other}\""
                    )))
                }
            },
        };
        Ok(ScenarioFile {
            algebra,
            rho,
            partition,
            automorphism,
            variant,
            horizon,
            prune,
            log_base,
        })
    }

    /// Concrete scenario; requires fixed partition elements.
    pub fn scenario(&self) -> CliResult<Scenario> {
        let partition = match &self.partition {
            PartitionSpec::Fixed(p) => p.clone(),
            PartitionSpec::Family(_) => {
                return Err(CliError::Input(
                    "partition: this scenario declares a family; use the optimize subcommand"
                        .into(),
                ))
            }
        };
        Ok(Scenario::new(
            self.rho.clone(),
            partition,
            self.automorphism.clone(),
            self.variant,
            self.horizon,
        )?
        .with_prune(self.prune)?)
    }

    /// Partition family; requires a family spec.
    pub fn family(&self) -> CliResult<&PartitionFamily> {
        match &self.partition {
            PartitionSpec::Family(f) => Ok(f),
            PartitionSpec::Fixed(_) => Err(CliError::Input(
                "partition: the optimize subcommand needs a family spec, not fixed elements"
                    .into(),
            )),
        }
    }

    /// Scenario with the partition left open, for the optimizer.
    pub fn template(&self) -> ScenarioTemplate {
        let mut t = ScenarioTemplate::new(
            self.rho.clone(),
            self.automorphism.clone(),
            self.variant,
        );
        t.prune = self.prune;
        t
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> CliResult<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| CliError::Input(format!("{path}: expected an object")))
}

fn required<'a>(map: &'a Map<String, Value>, path: &str, key: &str) -> CliResult<&'a Value> {
    map.get(key)
        .ok_or_else(|| CliError::Input(format!("{path}: missing field \"{key}\"")))
}

fn optional<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key)
}

fn check_keys(map: &Map<String, Value>, path: &str, allowed: &[&str]) -> CliResult<()> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(CliError::Input(format!(
                "{path}: unknown field \"{key}\" (expected one of {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn as_string<'a>(v: &'a Value, path: &str) -> CliResult<&'a str> {
    v.as_str()
        .ok_or_else(|| CliError::Input(format!("{path}: expected a string")))
}

fn as_f64(v: &Value, path: &str) -> CliResult<f64> {
    v.as_f64()
        .ok_or_else(|| CliError::Input(format!("{path}: expected a number")))
}

fn as_usize(v: &Value, path: &str) -> CliResult<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| CliError::Input(format!("{path}: expected a nonnegative integer")))
}

fn as_complex(v: &Value, path: &str) -> CliResult<Complex64> {
    let pair = v
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| CliError::Input(format!("{path}: expected a [re, im] pair")))?;
    let re = as_f64(&pair[0], path)?;
    let im = as_f64(&pair[1], path)?;
    Ok(Complex64::new(re, im))
}

/// Row-major square matrix of [re, im] entries with the expected dimension.
fn as_matrix(v: &Value, path: &str, dim: usize) -> CliResult<OperatorMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| CliError::Input(format!("{path}: expected an array of rows")))?;
    if rows.len() != dim {
        return Err(CliError::Input(format!(
            "{path}: expected {dim} rows, got {}",
            rows.len()
        )));
    }
    let mut out = OperatorMatrix::zeros(dim, dim);
    for (r, row_value) in rows.iter().enumerate() {
        let row = row_value
            .as_array()
            .ok_or_else(|| CliError::Input(format!("{path}[{r}]: expected an array of entries")))?;
        if row.len() != dim {
            return Err(CliError::Input(format!(
                "{path}[{r}]: expected {dim} entries, got {}",
                row.len()
            )));
        }
        for (c, entry) in row.iter().enumerate() {
            out[(r, c)] = as_complex(entry, &format!("{path}[{r}][{c}]"))?;
        }
    }
    Ok(out)
}

fn parse_algebra(v: &Value) -> CliResult<AlgebraKind> {
    let map = as_object(v, "algebra")?;
    let kind = as_string(required(map, "algebra", "kind")?, "algebra.kind")?;
    match kind {
        "matrix" => {
            check_keys(map, "algebra", &["kind", "dim"])?;
            let dim = as_usize(required(map, "algebra", "dim")?, "algebra.dim")?;
            if dim == 0 {
                return Err(CliError::Input("algebra.dim: must be at least 1".into()));
            }
            Ok(AlgebraKind::Matrix { dim })
        }
        "car" => {
            check_keys(map, "algebra", &["kind", "modes"])?;
            let modes = as_usize(required(map, "algebra", "modes")?, "algebra.modes")?;
            if !(1..=10).contains(&modes) {
                return Err(CliError::Input(format!(
                    "algebra.modes: must lie in 1..=10, got {modes}"
                )));
            }
            Ok(AlgebraKind::Car { modes })
        }
        other => Err(CliError::Input(format!(
            "algebra.kind: expected \"matrix\" or \"car\", got \"{other}\""
        ))),
    }
}

fn parse_rho(v: &Value, dim: usize) -> CliResult<OperatorMatrix> {
    if v.is_array() {
        return as_matrix(v, "rho", dim);
    }
    let map = as_object(v, "rho")?;
    let preset = as_string(required(map, "rho", "preset")?, "rho.preset")?;
    match preset {
        "diag" => {
            check_keys(map, "rho", &["preset", "values"])?;
            let raw = required(map, "rho", "values")?
                .as_array()
                .ok_or_else(|| CliError::Input("rho.values: expected an array".into()))?;
            if raw.len() != dim {
                return Err(CliError::Input(format!(
                    "rho.values: expected {dim} entries, got {}",
                    raw.len()
                )));
            }
            let mut entries = Vec::with_capacity(dim);
            for (i, value) in raw.iter().enumerate() {
                entries.push(Complex64::new(
                    as_f64(value, &format!("rho.values[{i}]"))?,
                    0.0,
                ));
            }
            Ok(OperatorMatrix::from_diagonal(&DVector::from_vec(entries)))
        }
        "gibbs" => {
            check_keys(map, "rho", &["preset", "hamiltonian", "beta"])?;
            let h = as_matrix(required(map, "rho", "hamiltonian")?, "rho.hamiltonian", dim)?;
            let beta = as_f64(required(map, "rho", "beta")?, "rho.beta")?;
            if !beta.is_finite() {
                return Err(CliError::Input("rho.beta: must be finite".into()));
            }
            gibbs_state(&h, beta)
        }
        other => Err(CliError::Input(format!(
            "rho.preset: expected \"diag\" or \"gibbs\", got \"{other}\""
        ))),
    }
}

/// exp(-beta H) / Tr exp(-beta H), computed in the eigenbasis of H with the
/// largest exponent factored out so extreme beta values cannot overflow.
fn gibbs_state(h: &OperatorMatrix, beta: f64) -> CliResult<OperatorMatrix> {
    let spectrum = linalg::hermitian_eig(h)
        .map_err(|e| CliError::Input(format!("rho.hamiltonian: {e}")))?;
    let exponents: Vec<f64> = spectrum.eigenvalues.iter().map(|&x| -beta * x).collect();
    let peak = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|&e| (e - peak).exp()).collect();
    let z: f64 = weights.iter().sum();
    let diag = OperatorMatrix::from_diagonal(&DVector::from_iterator(
        weights.len(),
        weights.iter().map(|&w| Complex64::new(w / z, 0.0)),
    ));
    Ok(&spectrum.eigenvectors * diag * spectrum.eigenvectors.adjoint())
}

fn parse_partition_kind(text: &str, path: &str) -> CliResult<PartitionKind> {
    match text {
        "orthogonal-projective" => Ok(PartitionKind::OrthogonalProjective),
        "kraus" => Ok(PartitionKind::Kraus),
        other => Err(CliError::Input(format!(
            "{path}: expected \"orthogonal-projective\" or \"kraus\", got \"{other}\""
        ))),
    }
}

fn parse_elements(v: &Value, path: &str, dim: usize) -> CliResult<Vec<OperatorMatrix>> {
    let raw = v
        .as_array()
        .ok_or_else(|| CliError::Input(format!("{path}: expected an array of matrices")))?;
    raw.iter()
        .enumerate()
        .map(|(i, m)| as_matrix(m, &format!("{path}[{i}]"), dim))
        .collect()
}

fn parse_partition(v: &Value, dim: usize) -> CliResult<PartitionSpec> {
    let map = as_object(v, "partition")?;
    if map.contains_key("family") {
        check_keys(map, "partition", &["family"])?;
        let fam = as_object(required(map, "partition", "family")?, "partition.family")?;
        let kind = as_string(
            required(fam, "partition.family", "type")?,
            "partition.family.type",
        )?;
        match kind {
            "rotated-projective" => {
                check_keys(fam, "partition.family", &["type", "bounds"])?;
                let raw = required(fam, "partition.family", "bounds")?
                    .as_array()
                    .ok_or_else(|| {
                        CliError::Input("partition.family.bounds: expected an array".into())
                    })?;
                let mut bounds = Vec::with_capacity(raw.len());
                for (i, pair) in raw.iter().enumerate() {
                    let path = format!("partition.family.bounds[{i}]");
                    let pair = pair
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| CliError::Input(format!("{path}: expected [lo, hi]")))?;
                    bounds.push((as_f64(&pair[0], &path)?, as_f64(&pair[1], &path)?));
                }
                let family = rotated_projective_family(dim, bounds)
                    .map_err(|e| CliError::Input(format!("partition.family: {e}")))?;
                Ok(PartitionSpec::Family(family))
            }
            "constant" => {
                check_keys(fam, "partition.family", &["type", "kind", "elements"])?;
                let kind = parse_partition_kind(
                    as_string(
                        required(fam, "partition.family", "kind")?,
                        "partition.family.kind",
                    )?,
                    "partition.family.kind",
                )?;
                let elements = parse_elements(
                    required(fam, "partition.family", "elements")?,
                    "partition.family.elements",
                    dim,
                )?;
                let fixed = Partition::new(elements, kind)
                    .map_err(|e| CliError::Input(format!("partition.family.elements: {e}")))?;
                let family = PartitionFamily::new(
                    vec![(0.0, 0.0)],
                    Box::new(move |_| Ok(fixed.clone())),
                )
                .map_err(|e| CliError::Input(format!("partition.family: {e}")))?;
                Ok(PartitionSpec::Family(family))
            }
            other => Err(CliError::Input(format!(
                "partition.family.type: expected \"rotated-projective\" or \"constant\", got \"{other}\""
            ))),
        }
    } else {
        check_keys(map, "partition", &["kind", "elements"])?;
        let kind = parse_partition_kind(
            as_string(required(map, "partition", "kind")?, "partition.kind")?,
            "partition.kind",
        )?;
        let elements = parse_elements(
            required(map, "partition", "elements")?,
            "partition.elements",
            dim,
        )?;
        let partition = Partition::new(elements, kind)
            .map_err(|e| CliError::Input(format!("partition: {e}")))?;
        Ok(PartitionSpec::Fixed(partition))
    }
}

fn parse_automorphism(v: &Value, algebra: AlgebraKind) -> CliResult<Automorphism> {
    let dim = algebra.dim();
    if v.is_array() {
        let u = as_matrix(v, "automorphism", dim)?;
        return Automorphism::new(u)
            .map_err(|e| CliError::Input(format!("automorphism: {e}")));
    }
    let map = as_object(v, "automorphism")?;
    let preset = as_string(required(map, "automorphism", "preset")?, "automorphism.preset")?;
    match preset {
        "phase" => {
            check_keys(map, "automorphism", &["preset", "t"])?;
            let t = as_f64(required(map, "automorphism", "t")?, "automorphism.t")?;
            if !t.is_finite() {
                return Err(CliError::Input("automorphism.t: must be finite".into()));
            }
            // Matrix algebra: level j gets phase e^{i t j}. CAR algebra: basis
            // state b gets e^{i t |b|} with |b| its occupation count, the
            // diagonal form of conjugation by exp(i t a†a).
            let phase_exponent = |index: usize| -> f64 {
                match algebra {
                    AlgebraKind::Matrix { .. } => index as f64,
                    AlgebraKind::Car { .. } => index.count_ones() as f64,
                }
            };
            let u = OperatorMatrix::from_diagonal(&DVector::from_iterator(
                dim,
                (0..dim).map(|b| Complex64::new(0.0, t * phase_exponent(b)).exp()),
            ));
            Automorphism::new(u).map_err(|e| CliError::Input(format!("automorphism: {e}")))
        }
        "permutation" => {
            check_keys(map, "automorphism", &["preset", "sigma"])?;
            let raw = required(map, "automorphism", "sigma")?
                .as_array()
                .ok_or_else(|| {
                    CliError::Input("automorphism.sigma: expected an array".into())
                })?;
            let mut sigma = Vec::with_capacity(raw.len());
            for (i, value) in raw.iter().enumerate() {
                sigma.push(as_usize(value, &format!("automorphism.sigma[{i}]"))?);
            }
            if sigma.len() != dim {
                return Err(CliError::Input(format!(
                    "automorphism.sigma: expected {dim} entries, got {}",
                    sigma.len()
                )));
            }
            let u = linalg::permutation_matrix(&sigma)
                .map_err(|e| CliError::Input(format!("automorphism.sigma: {e}")))?;
            Automorphism::new(u).map_err(|e| CliError::Input(format!("automorphism: {e}")))
        }
        other => Err(CliError::Input(format!(
            "automorphism.preset: expected \"phase\" or \"permutation\", got \"{other}\""
        ))),
    }
}
