//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by model evaluation, training, and the experiment pipeline.
#[derive(Debug, Error)]
pub enum SodaError {
    /// A token id is outside the vocabulary.
    #[error("invalid token {token}: vocabulary size is {vocab}")]
    InvalidToken { token: u32, vocab: u32 },

    /// Parameters or intermediate values became non-finite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A configuration value violates its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An argument violates a precondition (empty batch, bad layer index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The operation is only defined for a different model architecture.
    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    /// A snapshot was requested from a model that has already been trained.
    #[error("stale base model: version counter is {version}, expected 0")]
    StaleBase { version: u64 },

    /// Two datasets that must share prompts do not line up.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Exact enumeration was requested beyond the supported budget.
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),

    /// The input is degenerate for the requested statistic (zero variance, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A serialized artifact has an incompatible schema version.
    #[error("schema migration error: {0}")]
    Migration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SodaError>;
