//! Library half of the carq binary: scenario parsing, subcommand
//! implementations and report rendering, kept in a lib so integration tests
//! can drive them directly.

// `!(x <= tol)` is used instead of `x > tol` where a NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

pub mod commands;
pub mod report;
pub mod scenario;

/// Error classes carrying the exit-code contract: input errors exit 1,
/// violated mathematical invariants exit 2, resource caps exit 3.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Math(String),
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Math(_) => 2,
            CliError::Resource(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Math(m) | CliError::Resource(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

/// Classifies core errors raised while computing. Parse-time validation maps
/// its own errors to `Input` with field paths; what reaches this conversion
/// comes from inside a run, where a probability or Hermiticity failure means
/// a broken invariant and a cap means resources.
impl From<carq_core::Error> for CliError {
    fn from(e: carq_core::Error) -> Self {
        match e {
            carq_core::Error::EnumerationCapExceeded { .. }
            | carq_core::Error::DimensionOverflow(_) => CliError::Resource(e.to_string()),
            carq_core::Error::InvalidProbabilities { .. }
            | carq_core::Error::NotHermitian { .. } => CliError::Math(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
