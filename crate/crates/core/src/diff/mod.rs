//! Dense reverse-mode automatic differentiation.
//!
//! Graphs are built once with static shapes, then evaluated many times with
//! freshly bound inputs. Values and gradients live in buffers allocated at
//! build time, so repeated forward/backward passes do not allocate.

mod adam;
mod graph;
mod kernels;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Graph, NodeId, OpKind};
pub use kernels::gemm;
pub use tensor::Tensor;
