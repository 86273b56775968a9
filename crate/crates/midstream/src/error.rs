//! Engine-wide error type.

use thiserror::Error;

/// Errors surfaced by the engine.
#[derive(Debug, Error)]
pub enum EngineError {
    /// A value violated a domain precondition (score range, empty text, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation.
    #[error("config error: {field}: {message}")]
    Config { field: &'static str, message: String },

    /// A ledger counter would overflow on merge.
    #[error("ledger overflow in field {field}")]
    LedgerOverflow { field: &'static str },

    /// Unknown prompt template id.
    #[error("unknown template: {0}")]
    UnknownTemplate(String),

    /// A template placeholder had no binding.
    #[error("unbound placeholder {placeholder:?} in template {template}")]
    UnboundPlaceholder { template: String, placeholder: String },

    /// No script entry matched a scripted-provider lookup.
    #[error("no script entry for role {role:?} key {key:?}")]
    ScriptMiss { role: String, key: String },

    /// A transport-level provider failure that survived retries.
    #[error("provider transport error: {0}")]
    Transport(String),

    /// The provider answered but the content could not be parsed as required.
    #[error("provider returned malformed content: {message}; raw: {raw}")]
    MalformedResponse { message: String, raw: String },

    /// Every proposer failed; the run cannot continue.
    #[error("all {0} proposals failed to generate")]
    AllProposalsFailed(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EngineError {
    pub fn domain(msg: impl Into<String>) -> Self {
        EngineError::Domain(msg.into())
    }

    /// True for failures worth retrying at the transport layer.
    pub fn is_retryable(&self) -> bool {
        matches!(self, EngineError::Transport(_))
    }
}
