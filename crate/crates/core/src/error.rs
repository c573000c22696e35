use thiserror::Error;

/// Errors raised by the library. Domain errors carry a short human readable
/// reason; validation failures collect every violated rule of a config.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined direction: zero vector has no L1 direction")]
    UndefinedDirection,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integral diverges: {0}")]
    NonIntegrable(String),

    #[error("A4 not certified: {0}")]
    DriftNotCertified(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("config I/O: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
