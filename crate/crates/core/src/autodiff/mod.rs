//! Minimal dense-network numeric core: tensors, dense layers with
//! reverse-mode gradients, Adam, finite-difference checks and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod network;
mod params;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{
    compare_with_finite_differences, grad_check, relative_error, squared_error_loss, weighted_sum_loss,
    GradCheckReport, Parameterized, FD_STEP,
};
pub use network::{sigmoid, Activation, GradFault, LayerSpec, Network};
pub use params::{ParamEntry, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape mismatch at layer {layer}: expected width {expected}, got {got:?}")]
    ShapeMismatch { layer: usize, expected: usize, got: Vec<usize> },
    #[error("backward called without a recorded forward pass")]
    NoRecordedForward,
    #[error("non-finite gradient in parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("duplicate parameter name {0}")]
    DuplicateParameter(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
