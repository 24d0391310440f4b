//! Chaos-keyed secure parallel compressive sensing.
//!
//! A 2D sparse signal is encrypted-while-compressed in two keyed layers:
//! a random permutation scrambles the signal so its nonzeros spread evenly
//! across columns, then every column is sampled with one shared measurement
//! matrix whose entries come from a skew tent map orbit. Decoding runs an
//! l1 solver per column and undoes the permutation. Both layers are derived
//! from four secret reals (two map keys), so no matrix ever needs to be
//! stored or transmitted.
//!
//! Module map:
//! - [`chaos`]: the skew tent map, sequences, key files.
//! - [`permute`]: permutation-order generators, application, sparsity accounting.
//! - [`sense`]: measurement matrix construction, column-wise sampling, RIP
//!   diagnostics, ciphertext files.
//! - [`recover`]: per-column l1 minimization and an exhaustive l0 oracle.
//! - [`imaging`]: 2D DCT sparsification, best s-term truncation, PGM I/O, PSNR.
//! - [`pipeline`]: the end-to-end keyed codec and key-bundle handling.
//! - [`harness`]: attack simulations, sweeps, and statistical secrecy tests.

pub mod chaos;
pub mod error;
pub mod harness;
pub mod imaging;
pub mod permute;
pub mod pipeline;
pub mod recover;
pub mod sense;

/// Re-exported so downstream crates build vectors and matrices against the
/// same nalgebra version.
pub use nalgebra;

/// A dense M x N real matrix, stored column-major.
pub type Signal2D = nalgebra::DMatrix<f64>;

pub use chaos::{ChaoticKey, ChaoticSequence, SampledSequence, DEFAULT_BURN_IN};
pub use error::{Error, Result};
pub use harness::{AttackKind, AttackSpec, ExperimentReport};
pub use imaging::Image;
pub use permute::{AcceptabilityFormula, PermutationOrder, SparsityVector};
pub use pipeline::{EncodeProfile, KeyBundle};
pub use recover::{RecoveryResult, SolverConfig, SolverMode};
pub use sense::{Ciphertext, MeasurementMatrix, DEFAULT_SAMPLING_DISTANCE};
