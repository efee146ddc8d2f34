//! Shared error type for the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric input that must be finite was NaN or infinite.
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    /// Array/matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration value; the message names the offending key.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed or inconsistent dataset input.
    #[error("data error: {0}")]
    Data(String),

    /// Metric is undefined for the given input (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// An operation was called before its preconditions were established.
    #[error("state error: {0}")]
    State(String),

    /// An artifact's embedded hash does not match the data it is applied to.
    #[error("hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
}
