use thiserror::Error;

/// Errors raised by the calibration toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    /// Input data could not be accepted (non-finite values, malformed rows, bad labels).
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter (temperature, gamma, grid bound) is invalid.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An iterative numerical routine failed to bracket or converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A numerical property check found a counterexample.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CalibError>;

impl From<std::io::Error> for CalibError {
    fn from(err: std::io::Error) -> Self {
        CalibError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for CalibError {
    fn from(err: serde_json::Error) -> Self {
        CalibError::Ingestion(format!("json: {err}"))
    }
}
