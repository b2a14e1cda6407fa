//! Crate-wide error type.

/// Errors produced by identification, simulation, and harness routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Matrix or tensor dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A solver produced a non-finite loss.
    #[error("solver diverged: {0}")]
    Diverged(String),

    /// Config file parse or validation failure.
    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    /// Malformed data file.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
