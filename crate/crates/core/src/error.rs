use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite value: {0}")]
    Numerics(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bad magic in {path}: expected {expected:?}, found {found:?}")]
    MagicMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("split violation: {0}")]
    SplitViolation(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("checkpoint hash mismatch: {0}")]
    HashMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
