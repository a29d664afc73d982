use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the scheduler, model, simulator and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (counts, rates, dimensions).
    #[error("configuration error: {0}")]
    Config(String),

    /// An index referenced a client, expert or sample that does not exist.
    #[error("index error: {what} {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// Malformed call arguments (duplicates, empty inputs, length mismatches).
    #[error("input error: {0}")]
    Input(String),

    /// Filesystem failure, always tagged with the offending path.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents did not parse.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    /// An output directory holds results from a different configuration.
    #[error("refusing to overwrite {path}: {message}")]
    Conflict { path: PathBuf, message: String },

    /// A run produced NaN or infinite metrics.
    #[error("non-finite metric: {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::Index { what, index, len })
    }
}
