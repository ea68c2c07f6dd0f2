//! Noise-adaptive normalized-momentum methods for stochastic nonconvex,
//! minimax and bilevel optimization, with synthetic test problems, baseline
//! optimizers, numerical checks and an experiment harness.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod hypergradient;
pub mod numeric;
pub mod optimizers;
pub mod problems;
pub mod schedules;
pub mod verify;

pub use error::{Error, Result};
pub use numeric::{NoiseModel, RealVector, RngStream};
pub use optimizers::{run, Algorithm, ProblemRef, RunSettings};
