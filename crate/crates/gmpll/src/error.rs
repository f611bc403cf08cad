//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by dataset handling, affinity construction, matching,
/// prediction, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed data row in a CSV input. `row` is the 1-based index of the
    /// data row (the header line is not counted).
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    /// A structurally invalid value: dataset invariant violation, dimension
    /// mismatch, label out of range, and similar.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A binary or JSON artifact that does not match its expected layout.
    #[error("invalid format: {0}")]
    InvalidFormat(String),

    /// The exhaustive matcher oracle refused a search space beyond its bound.
    #[error("search space too large: {0} feasible assignments exceed the 1e6 bound")]
    SearchSpaceExceeded(u128),

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an I/O error with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Builds a parse error for the 1-based data `row` of `path`.
    pub fn parse(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            row,
            message: message.into(),
        }
    }
}
