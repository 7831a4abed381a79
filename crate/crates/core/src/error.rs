use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown word {0:?}")]
    UnknownWord(String),

    #[error("token id {0} outside the vocabulary")]
    IdOutOfRange(usize),

    #[error("malformed MIDI file at byte {offset}: {reason}")]
    MalformedMidi { offset: usize, reason: String },

    #[error("corrupt checkpoint container: {0}")]
    CorruptCheckpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint was built for vocabulary {found}, current vocabulary is {expected}")]
    VocabMismatch { found: String, expected: String },

    #[error("non-finite loss at {context} (tensor {tensor})")]
    NonFinite { context: String, tensor: String },

    #[error("need at least {needed} pieces, got {got}")]
    TooFewPieces { needed: usize, got: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for numeric failures (non-finite values) as opposed to bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
