use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("unsatisfiable generation parameters: {0}")]
    Unsatisfiable(String),

    #[error("topic {topic} has no dominated documents")]
    EmptyTopic { topic: usize },

    #[error("no document has dominant weight >= {threshold} for topic {topic}")]
    NoSeedDocument { topic: usize, threshold: f64 },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("trace io: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidValue(msg.into())
}
