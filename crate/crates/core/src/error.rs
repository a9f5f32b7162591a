use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration. `field` names the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// Config file could not be parsed (message carries line/column).
    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    /// An operation was called outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("power price calibration failed at {point}: {message}")]
    Calibration { point: String, message: String },

    #[error("output verification failed for {path}: {message}")]
    Manifest { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
