//! Deterministic scripted provider for offline replay.
//!
//! A script maps (agent role, match key) to a canned response with declared
//! token counts. Match keys are content hashes from [`make_match_key`];
//! entries may also use a hash prefix, an optional `:<seed>` suffix for
//! seed-dispatched branching, or the wildcard `"*"` as a per-role fallback.
//!
//! Lookup order for a call, most specific first:
//! 1. exact `<full key>:<seed>`, then exact `<full key>`
//! 2. the same two forms for the base key (trailing assistant/tool
//!    continuation messages stripped), which lets one entry serve every
//!    continuation of the same logical generation
//! 3. longest prefix match over the same four candidates
//! 4. the role wildcard `"*"`
//!
//! Segment entries return their chunks one continuation at a time: the
//! provider scans the assistant context for segments already delivered (in
//! order) and returns the next one, so replay stays stateless and
//! order-independent.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

use super::{make_match_key, Completion, FinishReason, GenParams, Message, MessageRole, Provider};

/// One chunk of a segmented scripted response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub text: String,
    pub tokens_out: u64,
}

/// Response body of a script entry: whole text or ordered segments.
#[derive(Debug, Clone)]
pub enum ScriptResponse {
    Text(String),
    Segments(Vec<ScriptSegment>),
}

/// One line of a script file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub agent_role: String,
    pub match_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<ScriptSegment>>,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish: Option<FinishReason>,
}

impl ScriptEntry {
    fn body(&self) -> Result<ScriptResponse, EngineError> {
        match (&self.response, &self.segments) {
            (Some(text), None) => Ok(ScriptResponse::Text(text.clone())),
            (None, Some(segs)) if !segs.is_empty() => Ok(ScriptResponse::Segments(segs.clone())),
            _ => Err(EngineError::domain(format!(
                "script entry ({}, {}) must carry exactly one of response/segments",
                self.agent_role, self.match_key
            ))),
        }
    }
}

/// Read-only scripted provider.
pub struct ScriptedProvider {
    /// (agent_role, match_key) -> entry. Unique by construction.
    entries: BTreeMap<(String, String), ScriptEntry>,
}

impl ScriptedProvider {
    pub fn from_entries(entries: Vec<ScriptEntry>) -> Result<Self, EngineError> {
        let mut map = BTreeMap::new();
        for entry in entries {
            entry.body()?;
            let key = (entry.agent_role.clone(), entry.match_key.clone());
            if map.insert(key.clone(), entry).is_some() {
                return Err(EngineError::domain(format!(
                    "duplicate script entry for ({}, {})",
                    key.0, key.1
                )));
            }
        }
        Ok(Self { entries: map })
    }

    /// Load a JSONL script file, one entry per line. Blank lines are skipped.
    pub fn from_jsonl(path: &Path) -> Result<Self, EngineError> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| {
                EngineError::domain(format!("script line {}: {e}", lineno + 1))
            })?;
            entries.push(entry);
        }
        Self::from_entries(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, role: &str, candidates: &[String]) -> Option<&ScriptEntry> {
        // Exact matches in candidate priority order.
        for key in candidates {
            if let Some(e) = self.entries.get(&(role.to_string(), key.clone())) {
                return Some(e);
            }
        }
        // Longest prefix match; candidate order breaks length ties.
        let mut best: Option<(&ScriptEntry, usize)> = None;
        for key in candidates {
            for ((r, mk), entry) in &self.entries {
                if r == role && mk != "*" && !mk.is_empty() && key.starts_with(mk.as_str()) {
                    let better = match best {
                        Some((_, len)) => mk.len() > len,
                        None => true,
                    };
                    if better {
                        best = Some((entry, mk.len()));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        if let Some((entry, _)) = best {
            return Some(entry);
        }
        self.entries.get(&(role.to_string(), "*".to_string()))
    }
}

/// Strip trailing assistant/tool continuation messages, leaving the original
/// prompt messages.
fn base_messages(messages: &[Message]) -> &[Message] {
    let mut end = messages.len();
    while end > 0
        && matches!(
            messages[end - 1].role,
            MessageRole::Assistant | MessageRole::Tool
        )
    {
        end -= 1;
    }
    &messages[..end]
}

/// Concatenated assistant-continuation content, used to locate segment
/// progress.
fn continuation_context(messages: &[Message]) -> String {
    let base_len = base_messages(messages).len();
    messages[base_len..]
        .iter()
        .filter(|m| m.role == MessageRole::Assistant)
        .map(|m| m.content.as_str())
        .collect()
}

/// Next undelivered segment given the context already generated.
fn next_segment<'a>(segments: &'a [ScriptSegment], context: &str) -> Option<&'a ScriptSegment> {
    let mut cursor = 0;
    for seg in segments {
        match context[cursor..].find(&seg.text) {
            Some(idx) => cursor += idx + seg.text.len(),
            None => return Some(seg),
        }
    }
    None
}

impl Provider for ScriptedProvider {
    fn complete(
        &self,
        agent_role: &str,
        messages: &[Message],
        params: &GenParams,
    ) -> Result<Completion, EngineError> {
        params.validate()?;
        if messages.is_empty() {
            return Err(EngineError::domain("messages must be non-empty"));
        }
        let full = make_match_key(agent_role, messages);
        let base = make_match_key(agent_role, base_messages(messages));
        let candidates = vec![
            format!("{full}:{}", params.seed),
            full.clone(),
            format!("{base}:{}", params.seed),
            base,
        ];
        let entry = self
            .lookup(agent_role, &candidates)
            .ok_or_else(|| EngineError::ScriptMiss {
                role: agent_role.to_string(),
                key: full.clone(),
            })?;
        let finish = entry.finish.unwrap_or(FinishReason::Stop);
        match entry.body()? {
            ScriptResponse::Text(text) => Ok(Completion {
                text,
                tokens_in: entry.tokens_in,
                tokens_out: entry.tokens_out,
                finish_reason: finish,
            }),
            ScriptResponse::Segments(segments) => {
                let context = continuation_context(messages);
                match next_segment(&segments, &context) {
                    Some(seg) => Ok(Completion {
                        text: seg.text.clone(),
                        tokens_in: entry.tokens_in,
                        tokens_out: seg.tokens_out,
                        finish_reason: finish,
                    }),
                    None => Ok(Completion {
                        text: String::new(),
                        tokens_in: entry.tokens_in,
                        tokens_out: 0,
                        finish_reason: FinishReason::Stop,
                    }),
                }
            }
        }
    }
}

/// Helper for assembling scripts in tests and fixture generators.
#[derive(Debug, Default)]
pub struct ScriptBuilder {
    entries: Vec<ScriptEntry>,
}

impl ScriptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Entry matched by the content hash of `messages`.
    pub fn respond(
        &mut self,
        role: &str,
        messages: &[Message],
        response: impl Into<String>,
        tokens_in: u64,
        tokens_out: u64,
    ) -> &mut Self {
        self.entries.push(ScriptEntry {
            agent_role: role.to_string(),
            match_key: make_match_key(role, messages),
            response: Some(response.into()),
            segments: None,
            tokens_in,
            tokens_out,
            finish: None,
        });
        self
    }

    /// Entry matched by content hash plus a seed suffix.
    pub fn respond_seeded(
        &mut self,
        role: &str,
        messages: &[Message],
        seed: u64,
        response: impl Into<String>,
        tokens_in: u64,
        tokens_out: u64,
    ) -> &mut Self {
        self.entries.push(ScriptEntry {
            agent_role: role.to_string(),
            match_key: format!("{}:{seed}", make_match_key(role, messages)),
            response: Some(response.into()),
            segments: None,
            tokens_in,
            tokens_out,
            finish: None,
        });
        self
    }

    /// Segmented entry for chunk-by-chunk monitored generation.
    pub fn respond_segments(
        &mut self,
        role: &str,
        messages: &[Message],
        seed: Option<u64>,
        segments: Vec<(String, u64)>,
        tokens_in: u64,
    ) -> &mut Self {
        let key = match seed {
            Some(s) => format!("{}:{s}", make_match_key(role, messages)),
            None => make_match_key(role, messages),
        };
        self.entries.push(ScriptEntry {
            agent_role: role.to_string(),
            match_key: key,
            response: None,
            segments: Some(
                segments
                    .into_iter()
                    .map(|(text, tokens_out)| ScriptSegment { text, tokens_out })
                    .collect(),
            ),
            tokens_in,
            tokens_out: 0,
            finish: None,
        });
        self
    }

    /// Per-role fallback used when no content key matches.
    pub fn respond_any(
        &mut self,
        role: &str,
        response: impl Into<String>,
        tokens_in: u64,
        tokens_out: u64,
    ) -> &mut Self {
        self.entries.push(ScriptEntry {
            agent_role: role.to_string(),
            match_key: "*".to_string(),
            response: Some(response.into()),
            segments: None,
            tokens_in,
            tokens_out,
            finish: None,
        });
        self
    }

    pub fn push(&mut self, entry: ScriptEntry) -> &mut Self {
        self.entries.push(entry);
        self
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    pub fn build(&self) -> Result<ScriptedProvider, EngineError> {
        ScriptedProvider::from_entries(self.entries.clone())
    }

    /// Write the script as JSONL, one entry per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), EngineError> {
        let mut file = std::fs::File::create(path)?;
        for entry in &self.entries {
            serde_json::to_writer(&mut file, entry)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }
}
