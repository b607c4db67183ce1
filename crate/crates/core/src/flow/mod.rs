//! Conditional masked-autoregressive flows.
//!
//! A [`ConditionalFlow`] is a stack of MADE-conditioned affine layers with a
//! cyclic shift-by-one permutation after each layer. The conditioning
//! context (a normalized setting `x` and observation `y`) passes through a
//! small dense network whose embedding is appended to every layer's input.
//!
//! Density evaluation runs the cheap masked pass; sampling inverts each layer
//! one coordinate at a time.

mod context;
mod made;
mod model;
mod objective;
mod snapshot;

pub use context::ContextSpec;
pub use made::{hidden_degrees, MadeMasks};
pub use model::{standard_normal_rows, ConditionalFlow, FlowConfig, Standardizer};
pub use objective::{BatchGradient, NllEvaluator, CHUNK_SIZE};
pub use snapshot::{read_params, write_params, FlowHeader};
