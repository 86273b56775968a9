//! OpenAI-compatible chat-completion adapter.
//!
//! Speaks the standard JSON wire format: request `{model, messages,
//! temperature, max_tokens}`, response read from
//! `choices[0].message.content` and `usage.{prompt_tokens, completion_tokens}`.
//! Transport failures are retried with exponential backoff; anything the
//! server answers with is surfaced to the caller.

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

use super::{Completion, FinishReason, GenParams, Message, Provider, RetryPolicy};

/// Environment variable consulted for the bearer credential when none is set
/// explicitly.
pub const API_KEY_ENV: &str = "MIDSTREAM_API_KEY";

pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u64,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    #[serde(default)]
    content: String,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpProvider {
    /// `endpoint` is the full chat-completions URL. The credential falls
    /// back to [`API_KEY_ENV`] when not given.
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.or_else(|| std::env::var(API_KEY_ENV).ok()),
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn request_once(
        &self,
        messages: &[Message],
        params: &GenParams,
    ) -> Result<Completion, EngineError> {
        let body = WireRequest {
            model: &params.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.as_str(),
                    content: &m.content,
                })
                .collect(),
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(EngineError::Transport(format!("server error {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(EngineError::MalformedResponse {
                message: format!("http status {status}"),
                raw: text,
            });
        }
        let raw = resp
            .text()
            .map_err(|e| EngineError::Transport(e.to_string()))?;
        let parsed: WireResponse =
            serde_json::from_str(&raw).map_err(|e| EngineError::MalformedResponse {
                message: format!("invalid completion json: {e}"),
                raw: raw.clone(),
            })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| EngineError::MalformedResponse {
                message: "response has no choices".into(),
                raw,
            })?;
        let usage = parsed.usage.unwrap_or_default();
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        Ok(Completion {
            text: choice.message.content,
            tokens_in: usage.prompt_tokens,
            tokens_out: usage.completion_tokens,
            finish_reason,
        })
    }
}

impl Provider for HttpProvider {
    fn complete(
        &self,
        _agent_role: &str,
        messages: &[Message],
        params: &GenParams,
    ) -> Result<Completion, EngineError> {
        params.validate()?;
        if messages.is_empty() {
            return Err(EngineError::domain("messages must be non-empty"));
        }
        self.retry.run(|| self.request_once(messages, params))
    }
}
