//! Dense rank-2 tensors with tape-based reverse-mode differentiation.
//!
//! One implementation serves both precisions through [`Scalar`]: `f32` for
//! training and `f64` for finite-difference verification.

mod array;
pub mod gradcheck;
mod scalar;
mod tape;

pub use array::Tensor;
pub use gradcheck::{grad_check, grad_check_many, op_suite, GradCheckReport};
pub use scalar::Scalar;
pub use tape::{bce_with_logits, sigmoid, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("expected rank {expected}, got shape {shape:?}")]
    RankMismatch { expected: usize, shape: Vec<usize> },
    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("{op}: range {start}..{} exceeds extent {extent}", start + len)]
    SliceOutOfRange { op: &'static str, start: usize, len: usize, extent: usize },
    #[error("concatenation of zero tensors")]
    EmptyConcat,
    #[error("binary label must be 0 or 1, got {0}")]
    InvalidLabel(f64),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite value in {context} (node {node}, op {op})")]
    NonFinite { context: String, op: &'static str, node: usize },
}
