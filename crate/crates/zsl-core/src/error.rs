use std::path::Path;

use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: configuration, contract and format
/// problems exit with 2, numeric aborts with 3, I/O with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Format error pointing at a whole file.
    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }

    /// Format error naming the offending line (1-based, counting the header).
    pub fn format_at(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            msg: format!("line {}: {}", line, msg.into()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
