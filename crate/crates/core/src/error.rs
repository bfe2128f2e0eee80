use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("ragged trajectory for individual '{id}': expected {expected} rows, found {found}")]
    Ragged {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid value at {location}: {message}")]
    Value { location: String, message: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-convergence: {0}")]
    NonConvergence(String),

    #[error("unsupported preprocessing mode '{0}'")]
    UnsupportedMode(String),

    #[error("no training tuples with action {0}")]
    EmptyActionStratum(usize),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn value(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Value {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
