//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the watermarking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error("generation incomplete: collected {completed} of {requested} samples ({reason})")]
    IncompleteGeneration {
        completed: usize,
        requested: usize,
        reason: String,
    },
}

/// Errors from the chat-completion client, one variant per failure class.
#[derive(Debug, Error)]
pub enum LlmError {
    #[error("authentication rejected: {0}")]
    Auth(String),

    #[error("request timed out: {0}")]
    Timeout(String),

    #[error("transport failure: {0}")]
    Transport(String),

    #[error("rate limited: {0}")]
    RateLimited(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("client not configured: {0}")]
    NotConfigured(String),
}

impl LlmError {
    /// Transient failures are worth retrying; the rest fail fast.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            LlmError::Timeout(_) | LlmError::Transport(_) | LlmError::RateLimited(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
