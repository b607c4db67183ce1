//! Sequential Bayesian experimental design driven by conditional
//! normalizing-flow posteriors.
//!
//! The crate is organised bottom-up:
//!
//! - [`diff`]: dense reverse-mode autodiff and Adam.
//! - [`flow`]: conditional masked-autoregressive flows `Q(λ | y, x)`.
//! - [`models`]: simulated experiments (coupled cavities, qubit chain,
//!   conjugate Gaussian reference).
//! - [`engine`]: prior chain, variational training, information-gain scans
//!   and the measurement loop.
//! - [`metrics`]: realized and cumulative information gain, predictive KL,
//!   posterior summaries.

pub mod diff;
pub mod error;
pub mod exec;
pub mod rng;

pub use error::{Error, Result};
pub use exec::ExecMode;

pub mod flow;
pub mod models;
pub mod engine;
pub mod metrics;
