//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
///
/// Variants are grouped by cause: malformed inputs (dimensions, ranges,
/// non-square data), violated mathematical preconditions (non-Hermitian,
/// non-density, non-unitary inputs), and resource caps (enumeration and
/// tensor-power limits).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix for {context} must be square, got {rows}x{cols}")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("mode count {0} outside the supported range 1..=10")]
    ModeCountOutOfRange(usize),

    #[error("tensor power too large: {0}")]
    DimensionOverflow(String),

    #[error("matrix not Hermitian: max |a - a†| entry {deviation:.3e} exceeds {tol:.1e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("matrix not unitary: max |u†u - 1| entry {deviation:.3e} exceeds {tol:.1e}")]
    NotUnitary { deviation: f64, tol: f64 },

    #[error("not a density operator: {reason}")]
    InvalidDensity { reason: String },

    #[error("invalid probability vector: {reason}")]
    InvalidProbabilities { reason: String },

    #[error("invalid partition: {reason}")]
    InvalidPartition { reason: String },

    #[error("invalid index word: {reason}")]
    InvalidWord { reason: String },

    #[error("invalid scenario: {reason}")]
    InvalidScenario { reason: String },

    #[error("invalid stochastic matrix: {reason}")]
    InvalidStochastic { reason: String },

    #[error(
        "enumeration cap exceeded at horizon {horizon}: more than {cap} words would be enumerated"
    )]
    EnumerationCapExceeded { horizon: usize, cap: u64 },

    #[error("entropy series too short: need at least {need} horizons, got {got}")]
    SeriesTooShort { need: usize, got: usize },

    #[error("optimization budget {budget} is below the required minimum {required}")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("partition family produced an invalid partition at parameters {params:?}: {reason}")]
    InvalidFamily { params: Vec<f64>, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
