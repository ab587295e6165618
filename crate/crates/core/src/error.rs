use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its invariant.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Input data does not satisfy an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no crossing: {0}")]
    NoCrossing(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Parse { path: PathBuf, reason: String },

    /// An internal invariant was broken. Always a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::InvalidInput(_) => "invalid-input",
            Error::NoCrossing(_) => "no-crossing",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Internal(_) => "internal",
        }
    }

    /// Process exit code: 2 for usage errors, 1 for broken invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            _ => 2,
        }
    }
}
