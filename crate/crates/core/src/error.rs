use thiserror::Error;

/// Errors raised by the model, learners and metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpmError {
    #[error("invalid hyperparameter `{name}`: {reason}")]
    InvalidHyperparam { name: &'static str, reason: String },

    #[error("stick length v[{index}] = {value} lies outside (0, 1)")]
    StickOutOfRange { index: usize, value: f64 },

    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("requested {requested} items but only {available} are available")]
    TooMany { requested: usize, available: usize },

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, DpmError>;
