//! Minimal reverse-mode differentiation over dense 64-bit matrices.
//!
//! The operation set is exactly what the encoder and its heads use: affine
//! maps, row gathers and segment means for neighbor aggregation, column
//! concatenation, element-wise activations, inverted dropout, a
//! straight-through pass for quantized values, and the scalar losses.
//! [`finite_diff_check`] compares every backward rule against central
//! differences.

mod check;
mod tape;
mod tensor;

pub use check::{finite_diff_check, ABS_FLOOR};
pub use tape::{sigmoid, softmax, Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

pub(crate) use tape::weighted_bce_value;
pub(crate) use tensor::dot;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {0}")]
    Shape(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}
