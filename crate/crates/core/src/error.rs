use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Bad parameters handed to a constructor or generator.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data failed validation (CSV rows, schedules, paths).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("missing grid time {time} in input path (tolerance {tolerance})")]
    MissingGridTime { time: f64, tolerance: f64 },

    #[error("non-positive value {value} at t={time} in price path")]
    NonPositivePrice { time: f64, value: f64 },

    /// A guarded combinator (division, log, fractional power) left its domain.
    #[error("domain error at t={time}: {what}")]
    Domain { time: f64, what: String },

    #[error("negative multiplier {value} at t={time}")]
    NegativeMultiplier { time: f64, value: f64 },

    #[error("resource limit: {what} (limit {limit})")]
    Resource { what: String, limit: usize },

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Validation(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Validation(format!("json: {e}"))
    }
}
