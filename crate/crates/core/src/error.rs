use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the evaluation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented invariant (bad ids, duplicates, empty text).
    #[error("validation error: {0}")]
    Validation(String),

    /// A line of a text artifact could not be parsed.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A statistic is not defined for the given input (too few systems, degenerate marginals).
    #[error("undefined result: {0}")]
    Undefined(String),

    /// The text-generation backend failed after all retries.
    #[error("backend request failed ({context}): {message}")]
    Backend { context: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment (network, disk) rather than by the input.
    pub fn is_environmental(&self) -> bool {
        matches!(self, Error::Backend { .. } | Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
