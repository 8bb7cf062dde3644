//! Tensor arithmetic, reverse-mode gradients, Adam, seeded RNG and
//! checkpoint serialization.

pub mod checkpoint;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor, TensorKind};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamEntry, ParamId, ParamKind, ParamStore};
pub use rng::Rng;
pub use tape::{Gradients, Op, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MathError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{op}: {detail}")]
    Domain {
        op: &'static str,
        detail: &'static str,
    },
    #[error("loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("tape is empty")]
    EmptyTape,
    #[error("invalid node: {0}")]
    InvalidNode(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
