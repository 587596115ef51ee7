//! Coupled swing-equation dynamics in descriptor (differential-algebraic)
//! form, with structure-preserving estimation of per-generator inertia and
//! damping constants from sampled angle/frequency trajectories.
//!
//! The crate is organized along the pipeline:
//!
//! - [`network`]: susceptance topologies, Laplacian assembly, Kron reduction;
//! - [`dynamics`]: the descriptor model `E z' = A z + noise` and its seeded
//!   Euler-Maruyama simulator, including algebraic rows for zero-inertia
//!   droop generators;
//! - [`estimators`]: the constrained least-squares estimator on the
//!   descriptor residual, its per-node closed form, and the naive
//!   state-space baseline it is compared against;
//! - [`analysis`]: error metrics, estimator covariance characterization,
//!   and the reproducible Monte Carlo harness;
//! - [`config`] and [`scenarios`]: experiment files and the bundled
//!   39-bus-style cases.

// `!(x > 0.0)` is used deliberately to reject NaN along with nonpositive
// values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod network;
pub mod scenarios;

pub use error::{Error, Result};
