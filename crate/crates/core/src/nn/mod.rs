//! Small numerical kernel for the trainable attacks: tensors, layers with
//! hand-written backward passes, losses, optimizers and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

use thiserror::Error;

pub use layer::{Init, Layer, LayerSpec, ParamGrads, Params};
pub use loss::{bce, loss_bce, loss_mse};
pub use network::{Network, Trace};
pub use optim::{Optimizer, OptimizerSpec};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
