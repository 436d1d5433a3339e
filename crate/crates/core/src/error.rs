use thiserror::Error;

/// Errors raised by the model, sampler and decision routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("size mismatch: {what} ({left} vs {right})")]
    SizeMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration of partitions of {n} units exceeds the cap of {cap}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("target {target} outside the attainable range ({lo}, {hi})")]
    Unattainable { target: f64, lo: f64, hi: f64 },

    #[error("non-finite value at unit {unit}, time {time}")]
    NonFinite { unit: usize, time: usize },

    #[error("negative value {value} at unit {unit}, time {time} before square root")]
    NegativeValue { unit: usize, time: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
