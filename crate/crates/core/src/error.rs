use thiserror::Error;

/// Errors surfaced by the library API. Internal invariant violations are
/// asserts, not errors; this type covers conditions a caller can hit with
/// well-formed but unlucky or invalid input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("planner failed: {0}")]
    Planning(String),

    #[error("demonstration rejected: {0}")]
    Demonstration(String),

    #[error("checkpoint is malformed: {0}")]
    Checkpoint(String),

    #[error("dataset is malformed: {0}")]
    Dataset(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
