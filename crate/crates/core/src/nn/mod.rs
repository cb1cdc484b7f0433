//! Dense-network substrate: row-batched tensors, a reverse-mode tape over the
//! few operations the policy networks need, and first-order optimizers.
//!
//! Values are `f64` during training. Weights are stored `Fin × Fout` row-major
//! and applied as `y = Wᵀx + b`, so each input feature owns one contiguous row;
//! zero inputs skip their row entirely.

mod functional;
mod optim;
mod params;
mod tape;

pub(crate) use functional::td_target;
pub use functional::{argmax, entropy, relu, softmax, td_loss};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use params::{Checkpoint, Linear, ParamId, ParamStore, Tensor, CHECKPOINT_VERSION};
pub use tape::{Grads, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("entropy input is not a probability vector (sum {sum})")]
    NotNormalized { sum: f64 },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("loss must be a 1x1 tensor, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
