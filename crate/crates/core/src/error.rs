use thiserror::Error;

/// Errors produced anywhere in the ownership-testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("class index {class} out of range for {num_classes} classes")]
    InvalidClass { class: usize, num_classes: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("query budget exhausted after {used} queries")]
    BudgetExhausted { used: u64 },

    #[error("oracle does not serve logits (label_only)")]
    LabelOnly,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("regressor input contains a single membership class")]
    SingleClass,

    #[error("connection error: {0}")]
    Connection(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("remote error: {0}")]
    Remote(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
