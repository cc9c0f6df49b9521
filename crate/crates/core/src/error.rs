use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the modelling, optimization and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A covariance matrix could not be factorized even after adding jitter.
    #[error("numerical conditioning failure: {what} (last jitter tried: {jitter:e})")]
    Conditioning { what: String, jitter: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("objective evaluation failed: {0}")]
    Objective(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
