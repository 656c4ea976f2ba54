use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("class {class} has {count} samples, at least {needed} required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        needed: usize,
    },

    #[error("degenerate reference score {value:.3e} nats (must exceed {threshold:e})")]
    DegenerateReference { value: f64, threshold: f64 },

    #[error("matrix is singular or near-singular (|det| = {det:.3e})")]
    Singular { det: f64 },

    #[error("non-finite critic objective at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("file not found: {}\n  expected CSV schema: {schema}", path.display())]
    NotFound { path: PathBuf, schema: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
