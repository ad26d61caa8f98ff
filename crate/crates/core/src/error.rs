use thiserror::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("no forward cache available for backward pass")]
    MissingCache,

    #[error("backward step count mismatch: cache has {cached} steps, got {got} upstream gradients")]
    StepCountMismatch { cached: usize, got: usize },

    #[error("invalid bracket sequence: {0}")]
    InvalidBrackets(String),

    #[error("sequence generation gave up after {attempts} rejected attempts")]
    GenerationFailed { attempts: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("degenerate ablation: {0}")]
    DegenerateAblation(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum failure: {0}")]
    ChecksumMismatch(String),

    #[error("csv parse error in {file} line {line}: {message}")]
    CsvParse {
        file: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
