use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unit id {unit} out of range for vocabulary of size {vocab_size}")]
    UnitOutOfRange { unit: u32, vocab_size: u32 },

    #[error("invalid run form at run {index}: {reason}")]
    InvalidRuns { index: usize, reason: &'static str },

    #[error("unit speed is undefined for an empty sequence")]
    EmptySequence,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("visible token at position {position} contradicts the target skeleton")]
    Contradiction { position: usize },

    #[error("missing prediction for scored position {0}")]
    MissingPrediction(usize),

    #[error("time bin {bin} is degenerate: {reason}")]
    DegenerateBin { bin: usize, reason: String },

    #[error("non-finite velocity at Euler step {step}")]
    NonFiniteVelocity { step: usize },

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("{0} is undefined")]
    Undefined(&'static str),

    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
