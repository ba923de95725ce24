use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}: {source}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("CSV input has no VAERS_ID column")]
    MissingIdColumn,

    #[error("malformed CSV record at line {line}: {reason}")]
    MalformedRecord { line: u64, reason: String },

    #[error("class id {0} is outside 0..=7")]
    InvalidClass(i64),

    #[error("need at least 5 ages for quintiles, got {0}; use a single age band instead")]
    TooFewAges(usize),

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("duplicate report id {0}")]
    DuplicateId(String),

    #[error("invalid subsample fraction {0}")]
    InvalidFraction(f64),

    #[error("cannot train a vocabulary on an empty corpus")]
    EmptyCorpus,

    #[error("target vocabulary size {target} is below the {minimum} entries needed for specials and alphabet")]
    VocabTooSmall { target: usize, minimum: usize },

    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite gradient at step {step} (parameter {index})")]
    NonFiniteGradient { step: u64, index: usize },

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: {preds} predictions vs {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },

    #[error("cannot compute metric over zero examples")]
    EmptyInput,

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("selection error: {0}")]
    Selection(String),
}

impl Error {
    pub fn io_at(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            source,
        }
    }
}
