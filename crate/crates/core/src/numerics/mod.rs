//! Dense `f64` linear algebra and a small reverse-mode autodiff tape.

mod matrix;
mod optim;
mod tape;

pub use matrix::{dot, softmax, Matrix};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: non-finite value")]
    NonFiniteValue { op: &'static str },
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("backward on an empty tape")]
    EmptyTape,
    #[error("loss must be 1x1, got {0:?}")]
    NonScalarLoss((usize, usize)),
}
