//! In-stream retrieval: window scheduling over the generation stream,
//! yes/no retrieval decisions, query synthesis, evidence injection, and
//! budget-enforced monitored generation.
//!
//! Providers return whole completions; the engine re-segments the output
//! into overlapping character windows and, when a window triggers an
//! injection, appends the composed evidence to the stream and resumes
//! generation from the augmented context. Injections only ever append —
//! the pre-injection stream is always a prefix of the post-injection
//! stream.

use serde::{Deserialize, Serialize};

use crate::calls::{call_llm, log_retrieval, amend_last, CallKind, CallLog};
use crate::error::EngineError;
use crate::ledger::CostLedger;
use crate::provider::{
    roles, template_ids, GenParams, Message, MessageRole, Provider, TemplateCatalog,
};
use crate::retrieval::{Evidence, Retriever};
use crate::types::WorkflowConfig;

/// One monitoring window over the generation stream. Offsets are in
/// characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub is_tail: bool,
}

/// Window offsets without text, for the pure scheduling function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub start: usize,
    pub end: usize,
    pub is_tail: bool,
}

/// Window schedule for a stream of `stream_length` characters.
///
/// Full windows start at multiples of `stride = chunk - overlap` and are
/// emitted once the whole chunk fits. With `flush`, a final partial tail
/// window covers the remainder whenever characters past the last full
/// window exist, so every character belongs to at least one window.
pub fn windows(
    stream_length: usize,
    chunk: usize,
    overlap: usize,
    flush: bool,
) -> Result<Vec<WindowSpan>, EngineError> {
    if overlap == 0 || overlap >= chunk {
        return Err(EngineError::domain(format!(
            "need 0 < overlap < chunk, got overlap {overlap} chunk {chunk}"
        )));
    }
    let stride = chunk - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    while start + chunk <= stream_length {
        spans.push(WindowSpan {
            start,
            end: start + chunk,
            is_tail: false,
        });
        start += stride;
    }
    if flush {
        let covered_end = spans.last().map(|w| w.end).unwrap_or(0);
        if stream_length > covered_end {
            spans.push(WindowSpan {
                start,
                end: stream_length,
                is_tail: true,
            });
        }
    }
    Ok(spans)
}

/// One monitor firing (or non-firing) with everything that followed from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub window: Window,
    pub decision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection: Option<String>,
    pub injected_tokens: u64,
    /// Why a positive decision produced no injection: "budget",
    /// "empty_query", "no_evidence", or "injector_error".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suppressed_reason: Option<String>,
    /// Parse warnings and similar diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
}

impl TriggerEvent {
    fn quiet(window: Window, note: Option<String>) -> Self {
        Self {
            window,
            decision: false,
            query: None,
            evidence: None,
            injection: None,
            injected_tokens: 0,
            suppressed_reason: None,
            note,
            problem_id: None,
            candidate_id: None,
        }
    }

    pub fn injected(&self) -> bool {
        self.injection.is_some()
    }
}

/// Result of one monitored generation.
#[derive(Debug, Clone)]
pub struct MonitoredOutput {
    pub text: String,
    pub events: Vec<TriggerEvent>,
}

/// Message builders shared with scripted-fixture authors.
pub mod prompts {
    use super::*;

    pub fn monitor_messages(
        catalog: &TemplateCatalog,
        window_text: &str,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::MONITOR,
            &[("text", window_text.to_string())].into_iter().collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }

    pub fn querier_messages(
        catalog: &TemplateCatalog,
        window_text: &str,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::QUERIER,
            &[("text", window_text.to_string())].into_iter().collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }

    pub fn injector_messages(
        catalog: &TemplateCatalog,
        context: &str,
        query: &str,
        evidence: &Evidence,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::INJECTOR,
            &[
                ("text", context.to_string()),
                ("rag_query", query.to_string()),
                ("rag_result", evidence.rendered()),
            ]
            .into_iter()
            .collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }
}

/// The monitor/querier/injector pipeline over a provider and retriever.
pub struct MonitorRag<'a> {
    pub provider: &'a dyn Provider,
    pub retriever: &'a dyn Retriever,
    pub catalog: &'a TemplateCatalog,
    pub config: &'a WorkflowConfig,
    /// Emit a partial tail window at end of generation (on by default so
    /// short generations are still monitored).
    pub flush_tail: bool,
}

enum WindowOutcome {
    NotTriggered,
    Suppressed,
    Injected,
}

impl<'a> MonitorRag<'a> {
    pub fn new(
        provider: &'a dyn Provider,
        retriever: &'a dyn Retriever,
        catalog: &'a TemplateCatalog,
        config: &'a WorkflowConfig,
    ) -> Self {
        Self {
            provider,
            retriever,
            catalog,
            config,
            flush_tail: true,
        }
    }

    fn params(&self, seed: u64) -> GenParams {
        GenParams {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            seed,
        }
    }

    /// Monitor probes may route to a dedicated (typically smaller) model.
    fn monitor_params(&self, seed: u64) -> GenParams {
        GenParams {
            model: self
                .config
                .monitor_model
                .clone()
                .unwrap_or_else(|| self.config.model.clone()),
            ..self.params(seed)
        }
    }

    /// Ask the monitor whether the window needs retrieval. Parses the first
    /// alphabetic token case-insensitively; anything that is not yes/no
    /// fails closed to "no" with a note.
    pub fn monitor_decide(
        &self,
        window_text: &str,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<(bool, Option<String>), EngineError> {
        if window_text.is_empty() {
            return Err(EngineError::domain("window text must be non-empty"));
        }
        let messages = prompts::monitor_messages(self.catalog, window_text)?;
        let completion = call_llm(
            self.provider,
            log,
            roles::MONITOR,
            template_ids::MONITOR,
            &messages,
            &self.monitor_params(seed),
            CallKind::Call,
        )?;
        Ok(parse_yes_no(&completion.text))
    }

    /// Turn the uncertain window into one concise search query. Returns
    /// `None` (trigger aborted) when the provider answers with nothing.
    pub fn generate_query(
        &self,
        window_text: &str,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<Option<String>, EngineError> {
        if window_text.is_empty() {
            return Err(EngineError::domain("window text must be non-empty"));
        }
        let messages = prompts::querier_messages(self.catalog, window_text)?;
        let completion = call_llm(
            self.provider,
            log,
            roles::QUERIER,
            template_ids::QUERIER,
            &messages,
            &self.params(seed),
            CallKind::Call,
        )?;
        let query = normalize_query(&completion.text);
        Ok(if query.is_empty() { None } else { Some(query) })
    }

    /// Compose the continuation that frames the retrieved evidence. The
    /// returned text appends to the context without modifying it.
    pub fn compose_injection(
        &self,
        context: &str,
        query: &str,
        evidence: &Evidence,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<(String, u64), EngineError> {
        if evidence.snippets.is_empty() {
            return Err(EngineError::domain(
                "injection requires at least one evidence snippet",
            ));
        }
        let messages = prompts::injector_messages(self.catalog, context, query, evidence)?;
        let completion = call_llm(
            self.provider,
            log,
            roles::INJECTOR,
            template_ids::INJECTOR,
            &messages,
            &self.params(seed),
            CallKind::Call,
        )?;
        Ok((completion.text, completion.tokens_out))
    }

    /// Generate with in-stream monitoring. After each newly completed
    /// window the monitor is probed; a positive decision within budget runs
    /// querier -> retrieval -> injector, appends the injection, and resumes
    /// generation from the augmented context. Total injections never exceed
    /// `max_rag`; budget exhaustion is recorded, not an error.
    pub fn monitored_generate(
        &self,
        role: &'static str,
        template_id: &'static str,
        base_messages: &[Message],
        seed: u64,
        log: &mut CallLog,
    ) -> Result<MonitoredOutput, EngineError> {
        if self.config.mode != crate::types::Mode::Monitor {
            return Err(EngineError::domain(
                "monitored generation requires mode=monitor",
            ));
        }
        let chunk = self.config.rag_chunk;
        let overlap = self.config.rag_overlapping;
        let stride = chunk - overlap;
        let params = self.params(seed);

        let mut stream: Vec<char> = Vec::new();
        let mut events: Vec<TriggerEvent> = Vec::new();
        let mut injections = 0usize;
        let mut scan = 0usize;
        let mut tail_probed_at: Option<usize> = None;
        let mut tokens_out_total = 0u64;
        let mut first_call = true;
        let mut pending_generation = true;

        'outer: loop {
            if pending_generation {
                pending_generation = false;
                let mut messages = base_messages.to_vec();
                if !first_call {
                    messages.push(Message {
                        role: MessageRole::Assistant,
                        content: stream.iter().collect(),
                    });
                }
                let kind = if first_call {
                    CallKind::Call
                } else {
                    CallKind::Continuation
                };
                let completion = call_llm(
                    self.provider,
                    log,
                    role,
                    template_id,
                    &messages,
                    &params,
                    kind,
                )?;
                first_call = false;
                tokens_out_total += completion.tokens_out;
                let chars: Vec<char> = completion.text.chars().collect();
                amend_last(
                    log,
                    CostLedger {
                        chars_generated: chars.len() as u64,
                        ..CostLedger::zero()
                    },
                )?;
                stream.extend(chars);
            }

            // Probe every full window that is now complete.
            while scan + chunk <= stream.len() {
                let window = Window {
                    start: scan,
                    end: scan + chunk,
                    text: stream[scan..scan + chunk].iter().collect(),
                    is_tail: false,
                };
                scan += stride;
                let outcome = self.process_window(
                    window,
                    &mut stream,
                    &mut injections,
                    &mut events,
                    seed,
                    log,
                )?;
                if matches!(outcome, WindowOutcome::Injected) {
                    if tokens_out_total < params.max_tokens {
                        pending_generation = true;
                    }
                    continue 'outer;
                }
            }

            // End of generated text: flush the partial tail once per length.
            if self.flush_tail {
                let covered_end = if scan == 0 { 0 } else { scan - stride + chunk };
                if stream.len() > covered_end && tail_probed_at != Some(stream.len()) {
                    tail_probed_at = Some(stream.len());
                    let window = Window {
                        start: scan,
                        end: stream.len(),
                        text: stream[scan..].iter().collect(),
                        is_tail: true,
                    };
                    let outcome = self.process_window(
                        window,
                        &mut stream,
                        &mut injections,
                        &mut events,
                        seed,
                        log,
                    )?;
                    if matches!(outcome, WindowOutcome::Injected) {
                        if tokens_out_total < params.max_tokens {
                            pending_generation = true;
                        }
                        continue 'outer;
                    }
                }
            }
            break;
        }

        Ok(MonitoredOutput {
            text: stream.iter().collect(),
            events,
        })
    }

    fn process_window(
        &self,
        window: Window,
        stream: &mut Vec<char>,
        injections: &mut usize,
        events: &mut Vec<TriggerEvent>,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<WindowOutcome, EngineError> {
        let (decision, note) = self.monitor_decide(&window.text, seed, log)?;
        if !decision {
            events.push(TriggerEvent::quiet(window, note));
            return Ok(WindowOutcome::NotTriggered);
        }
        if *injections >= self.config.max_rag {
            events.push(TriggerEvent {
                decision: true,
                suppressed_reason: Some("budget".to_string()),
                ..TriggerEvent::quiet(window, note)
            });
            return Ok(WindowOutcome::Suppressed);
        }
        let query = match self.generate_query(&window.text, seed, log)? {
            Some(q) => q,
            None => {
                events.push(TriggerEvent {
                    decision: true,
                    suppressed_reason: Some("empty_query".to_string()),
                    ..TriggerEvent::quiet(window, note)
                });
                return Ok(WindowOutcome::Suppressed);
            }
        };
        let started = std::time::Instant::now();
        let evidence = self
            .retriever
            .search_top_k(&query, self.config.query_top_k)?;
        log_retrieval(log, &query, started.elapsed().as_millis() as u64);
        if evidence.snippets.is_empty() {
            events.push(TriggerEvent {
                decision: true,
                query: Some(query),
                evidence: Some(evidence),
                suppressed_reason: Some("no_evidence".to_string()),
                ..TriggerEvent::quiet(window, note)
            });
            return Ok(WindowOutcome::Suppressed);
        }
        let context: String = stream.iter().collect();
        match self.compose_injection(&context, &query, &evidence, seed, log) {
            Ok((injection, injected_tokens)) => {
                let chars: Vec<char> = injection.chars().collect();
                amend_last(
                    log,
                    CostLedger {
                        injected_tokens,
                        chars_generated: chars.len() as u64,
                        ..CostLedger::zero()
                    },
                )?;
                stream.extend(chars);
                *injections += 1;
                events.push(TriggerEvent {
                    decision: true,
                    query: Some(query),
                    evidence: Some(evidence),
                    injection: Some(injection),
                    injected_tokens,
                    ..TriggerEvent::quiet(window, note)
                });
                Ok(WindowOutcome::Injected)
            }
            Err(err) if !matches!(err, EngineError::ScriptMiss { .. }) => {
                events.push(TriggerEvent {
                    decision: true,
                    query: Some(query),
                    evidence: Some(evidence),
                    suppressed_reason: Some("injector_error".to_string()),
                    note: Some(err.to_string()),
                    ..TriggerEvent::quiet(window, None)
                });
                Ok(WindowOutcome::Suppressed)
            }
            Err(err) => Err(err),
        }
    }
}

/// First alphabetic token, case-insensitive: "yes" is true, "no" is false,
/// anything else fails closed to false with a note.
pub fn parse_yes_no(text: &str) -> (bool, Option<String>) {
    let token: String = text
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    match token.to_lowercase().as_str() {
        "yes" => (true, None),
        "no" => (false, None),
        other => (
            false,
            Some(format!(
                "unparseable monitor reply (first token {other:?}); treated as no"
            )),
        ),
    }
}

/// Trim whitespace and surrounding quote pairs from a raw querier reply.
pub fn normalize_query(raw: &str) -> String {
    let mut s = raw.trim();
    loop {
        let stripped = s
            .strip_prefix('"')
            .and_then(|t| t.strip_suffix('"'))
            .or_else(|| s.strip_prefix('\'').and_then(|t| t.strip_suffix('\'')));
        match stripped {
            Some(inner) => s = inner.trim(),
            None => break,
        }
    }
    s.to_string()
}

/// The deterministic evidence-framing sentence used by scripted fixtures.
pub fn injection_sentence(query: &str, result: &str) -> String {
    format!(
        " Wait a minute, by searching information about {query}, I found that {result}. Now that I have more relevant information, I can continue my reasoning."
    )
}
