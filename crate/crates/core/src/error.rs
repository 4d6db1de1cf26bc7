use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pruning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or shapes disagree.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input (token id, sequence recipe, needle placement) is invalid.
    #[error("input error: {0}")]
    Input(String),

    /// Internal consistency between cache, active sets and scores was violated.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// A trace file does not start with the expected magic.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// A trace file is shorter or longer than its header implies.
    #[error("truncation error in {path}: expected {expected} bytes, found {found}")]
    Truncation {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    /// Trace contents failed row-stochastic validation.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Internal(_) => "internal",
            Error::Format { .. } => "format",
            Error::Truncation { .. } => "truncation",
            Error::Validation(_) => "validation",
            Error::Io { .. } => "io",
            Error::Serde(_) => "serde",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
