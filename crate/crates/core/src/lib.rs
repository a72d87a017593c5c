//! Simulation laboratory for spin-polarization correlation experiments.
//!
//! * [`quantum`]: exact singlet predictions, with smeared analyzers and
//!   finite detector efficiency.
//! * [`models`]: local hidden-variable models, the factorized model and the
//!   contextual singlet sampler.
//! * [`engine`]: finite runs, coincidence counting, CHSH and Herbert tests.
//! * [`stats`]: standard errors, Wilson intervals, z-scores.
//! * [`config`] and [`cli`]: experiment files and the `spinlab` binary.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod models;
pub mod quantum;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
