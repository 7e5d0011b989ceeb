use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CpaError {
    #[error("input size mismatch: expected {expected}, got {got}")]
    InputSize { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate equalizer: channel estimate is zero")]
    DegenerateEqualizer,

    #[error("scenario for {0} requires an adversary link")]
    MissingAdversary(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed one-hot vector: {0:?}")]
    MalformedOneHot(Vec<u8>),

    #[error("sample {index}: {reason}")]
    SampleInvariant { index: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl CpaError {
    /// Process exit code for the CLI, grouped by failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            CpaError::InvalidConfig(_) | CpaError::Serde(_) => 2,
            CpaError::Io(_) => 3,
            CpaError::Format(_) => 4,
            CpaError::InputSize { .. } | CpaError::ShapeMismatch(_) => 5,
            CpaError::EmptyDataset => 6,
            CpaError::SampleInvariant { .. } => 7,
            CpaError::DegenerateEqualizer
            | CpaError::MissingAdversary(_)
            | CpaError::MalformedOneHot(_) => 8,
        }
    }
}

impl From<serde_json::Error> for CpaError {
    fn from(e: serde_json::Error) -> Self {
        CpaError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CpaError>;
