//! Dense matrices, a reverse-mode tape, and first-order optimizers.

mod matrix;
mod optim;
mod tape;

pub use matrix::{dot, Matrix};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, Optimizer, OptimizerKind};
pub use tape::{sigmoid, Gradients, Tape, Var};

#[derive(Debug, thiserror::Error)]
pub enum NumError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("softmax segment {0} is empty")]
    EmptySegment(usize),
    #[error("non-finite {0}")]
    NonFinite(String),
}
