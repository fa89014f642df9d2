//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide error enum. Variants carry enough context to point at the
/// failing tensor op, file offset, config line, or protocol frame.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    NumericalFailure { op: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} at byte {offset}: {detail}")]
    Format {
        what: &'static str,
        offset: u64,
        detail: String,
    },

    #[error("config error at {location}: {detail}")]
    Config { location: String, detail: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
