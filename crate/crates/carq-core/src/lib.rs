//! Finite-dimensional operator-algebra toolkit.
//!
//! The crate builds CAR (fermionic) algebras on finite-mode Fock spaces,
//! drives quantum Markov chains out of a density operator, a partition of
//! the identity and a unitarily implemented automorphism, and computes the
//! resulting correlation-kernel tables, entropy sequences and dynamical
//! entropy estimates, including a sup over parameterized partition families.
//!
//! Modules:
//! - [`linalg`]: dense complex matrices, tensor products, partial traces,
//!   Hermitian spectra, von Neumann / Shannon entropies.
//! - [`fock`]: fermionic Fock spaces, CAR generators, permutation operators,
//!   antisymmetrizers, parity automorphisms.
//! - [`dynamics`]: partitions, automorphisms, transition expectations and
//!   chain states.
//! - [`kernel`]: correlation-kernel tables, entropy series, rate estimates,
//!   classical oracles.
//! - [`optimize`]: partition families and the sup of the rate over them.
//! - [`random`]: seeded samplers for scenarios and test suites.

// Negated float comparisons like `!(x <= tol)` are deliberate throughout:
// unlike `x > tol`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod kernel;
pub mod linalg;
pub mod optimize;
pub mod random;

pub use dynamics::{
    Automorphism, ChainState, DensityReport, JointState, KernelVariant, MarginalState, Partition,
    PartitionKind, PartitionReport, Scenario,
};
pub use error::{Error, Result};
pub use kernel::{EntropySeries, IndexWord, KernelTable, RateEstimate};
pub use linalg::{HermitianSpectrum, OperatorMatrix};
pub use optimize::{OptimizeResult, PartitionFamily, ScenarioTemplate};
