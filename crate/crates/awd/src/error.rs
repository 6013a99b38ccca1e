//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A JSONL line could not be parsed into an example.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A dataset contained no examples.
    #[error("dataset is empty")]
    EmptyDataset,

    /// A class does not have enough examples for the requested split.
    #[error("class {class:?} has {available} examples, need {needed}")]
    InsufficientClass {
        class: String,
        available: usize,
        needed: usize,
    },

    /// Operands of a primitive have incompatible shapes.
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    /// A NaN or infinity was produced; training state is unusable.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A caller violated an operation's contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A label refers to a class the model does not know.
    #[error("unknown class {0:?}")]
    MissingClass(String),

    /// A token id falls outside the embedding table.
    #[error("token id {id} out of range for vocabulary of size {size}")]
    Lookup { id: usize, size: usize },

    /// Training produced a non-finite loss; identifies where.
    #[error("numerical failure at epoch {epoch}, step {step}: {message}")]
    Numerical {
        epoch: usize,
        step: String,
        message: String,
    },

    /// Two model artifacts cannot be combined.
    #[error("incompatible models: {0}")]
    Incompatible(String),

    /// A checkpoint was written by a different format version.
    #[error("checkpoint version {found:?}, expected {expected:?}")]
    CheckpointVersion { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
