use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("episode already finished at t = {0}")]
    EpisodeFinished(usize),

    #[error("action index {index} out of range for a grid of {n_actions}")]
    ActionOutOfRange { index: usize, n_actions: usize },

    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("instance too large to enumerate: {0}")]
    EnumerationTooLarge(String),

    #[error("pricing violation: {0}")]
    Pricing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GridError>;
