//! The LLM boundary: completion contract, scripted replay provider, an
//! OpenAI-compatible HTTP adapter, and the prompt-template catalog.

mod http;
mod script;
mod templates;

pub use http::HttpProvider;
pub use script::{ScriptBuilder, ScriptEntry, ScriptResponse, ScriptSegment, ScriptedProvider};
pub use templates::{template_ids, TemplateCatalog};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::EngineError;

/// Agent role names used for script matching and call accounting.
pub mod roles {
    pub const PROPOSER: &str = "proposer";
    pub const CORRECTOR: &str = "corrector";
    pub const REFINER: &str = "refiner";
    pub const EVALUATOR: &str = "evaluator";
    pub const RANKER: &str = "ranker";
    pub const MONITOR: &str = "monitor";
    pub const QUERIER: &str = "querier";
    pub const INJECTOR: &str = "injector";
    pub const JUDGE: &str = "judge";

    /// Roles whose invocations count as agent steps. Monitor probes are
    /// accounted separately.
    pub const STEP_ROLES: [&str; 7] = [
        PROPOSER, CORRECTOR, REFINER, EVALUATOR, RANKER, QUERIER, INJECTOR,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
    Tool,
}

impl MessageRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
            MessageRole::Tool => "tool",
        }
    }
}

/// One chat message. Content may be empty only for an assistant prefix
/// continuation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: MessageRole::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: MessageRole::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, content: content.into() }
    }
    pub fn tool(content: impl Into<String>) -> Self {
        Self { role: MessageRole::Tool, content: content.into() }
    }
}

/// Generation parameters for one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u64,
    /// Derived per-call seed; scripts may branch on it.
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            model: "deepseek-v3.1".into(),
            temperature: 0.5,
            max_tokens: 65536,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.temperature < 0.0 {
            return Err(EngineError::domain("temperature must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(EngineError::domain("max_tokens must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

/// One completion result with the token counts reported by the backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub finish_reason: FinishReason,
}

/// The completion contract every backend implements.
///
/// Implementations must be safe for concurrent calls; ledger accounting is
/// the orchestrator's job, not the provider's.
pub trait Provider: Send + Sync {
    fn complete(
        &self,
        agent_role: &str,
        messages: &[Message],
        params: &GenParams,
    ) -> Result<Completion, EngineError>;
}

/// Stable content-derived key for script matching: sha-256 over the role and
/// the ordered (role, content) message pairs, hex-encoded.
///
/// The same logical call always hits the same script entry across runs; an
/// empty message list keys on the role alone.
pub fn make_match_key(agent_role: &str, messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(agent_role.as_bytes());
    for m in messages {
        hasher.update([0x1f]);
        hasher.update(m.role.as_str().as_bytes());
        hasher.update([0x1e]);
        hasher.update(m.content.as_bytes());
    }
    hex_encode(&hasher.finalize())
}

fn hex_encode(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Retry schedule for transport failures: bounded attempts, exponential
/// backoff. Malformed-content errors are never retried here; the calling
/// stage decides whether to re-prompt.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: std::time::Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: std::time::Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, EngineError>,
    ) -> Result<T, EngineError> {
        let mut backoff = self.initial_backoff;
        let mut last_err = None;
        for attempt in 0..self.max_attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => {
                    last_err = Some(e);
                    if attempt + 1 < self.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| EngineError::Transport("retries exhausted".into())))
    }
}
