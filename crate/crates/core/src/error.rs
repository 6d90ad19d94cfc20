use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or mismatched shapes supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition of an operation was violated (stepping a finished
    /// episode, out-of-range indices, a non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity showed up where only finite numbers are allowed.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Same kind of error, message prefixed with `what: `.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{what}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{what}: {m}")),
            Error::NonFinite(m) => Error::NonFinite(format!("{what}: {m}")),
            Error::Format(m) => Error::Format(format!("{what}: {m}")),
            io @ Error::Io { .. } => io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
