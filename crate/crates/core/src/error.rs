use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset format error: {0}")]
    DatasetFormat(String),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("stale state: {0}")]
    Stale(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported format version {found} (expected {expected}) in {what}")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
