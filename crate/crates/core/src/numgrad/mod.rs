//! Reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records primitive operations; [`Tape::backward`] replays them in
//! reverse. Trainable tensors live in a [`ParamStore`] and are bound onto a tape
//! for each forward pass, after which [`ParamStore::absorb_grads`] collects
//! their gradients for an [`Adam`] step.

mod checkpoint;
pub mod gradcheck;
mod kernels;
pub mod nn;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{Adam, Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumgradError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

pub type Result<T, E = NumgradError> = std::result::Result<T, E>;
