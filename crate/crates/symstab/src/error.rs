use thiserror::Error;

/// Errors produced by state construction, operator application and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem label `{0}` appears more than once")]
    LabelCollision(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not unitary (max |U\u{2020}U - I| = {max_deviation:.3e})")]
    NonUnitary { max_deviation: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("size budget exceeded: {what} requires {requested}, limit is {limit}")]
    SizeBudget {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
