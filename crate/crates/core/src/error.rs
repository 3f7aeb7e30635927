use thiserror::Error;

/// Errors surfaced by the analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed hex at byte {position}: {reason}")]
    Decode { position: usize, reason: String },

    #[error("function unit has no operations")]
    DegenerateUnit,

    #[error("corpus statistics need at least two vectors, got {0}")]
    InsufficientCorpus(usize),

    #[error("confidence must lie strictly between 0 and 1, got {0}")]
    InvalidConfidence(f64),

    #[error("group sizes must each be at least 2")]
    InsufficientGroup,

    #[error("labels and predictions differ in length: {labels} vs {predictions}")]
    LengthMismatch { labels: usize, predictions: usize },

    #[error("labels contain a single class; both classes are required")]
    SingleClass,

    #[error("k = {k} exceeds population size {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("analysis budget exceeded")]
    BudgetExceeded,

    #[error("invalid address {0:?}: expected 0x-prefixed 40 hex digits")]
    InvalidAddress(String),

    #[error("rpc error {code}: {message}")]
    Rpc { code: i64, message: String },

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
