//! Domain types shared across the workflow: problems, candidates, quality
//! reports, and the workflow configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::score;

/// One benchmark item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none", alias = "answer")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    /// Task split tag, e.g. "retrieval" or "reasoning".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl Problem {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            gold_answer: None,
            choices: None,
            category: None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.id.is_empty() {
            return Err(EngineError::domain("problem id must be non-empty"));
        }
        if self.question.is_empty() {
            return Err(EngineError::domain("problem question must be non-empty"));
        }
        Ok(())
    }
}

/// Pipeline stage a candidate was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Proposed,
    Corrected,
    HsrRefined,
    QairRevised,
    Ranked,
}

/// A solution artifact with lineage.
///
/// Candidate ids embed the proposer slot (`p3`, `c3`, `r3`, `r3.1`, ...) so
/// that index-based tie-breaking is derived from the id, not from list
/// position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub problem_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    pub stage: Stage,
    /// Parent candidate: the anchor for refined candidates, the corrected
    /// input for corrected/revised ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_of: Option<String>,
    /// For refined candidates, the ids of the sibling reference solutions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_ids: Vec<String>,
    /// Number of quality-loop revisions applied to this candidate.
    pub revision_round: u32,
}

impl Candidate {
    /// Proposer slot parsed from the id: the first run of ascii digits.
    /// Used for deterministic, permutation-independent tie-breaking.
    pub fn slot(&self) -> usize {
        slot_of_id(&self.id)
    }
}

/// First run of ascii digits in a candidate id, or usize::MAX when absent.
pub fn slot_of_id(id: &str) -> usize {
    let digits: String = id
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().unwrap_or(usize::MAX)
}

/// The per-candidate quality triple plus derived composite and pass flag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityReport {
    pub logic: f64,
    pub answer: f64,
    pub explanation: f64,
    pub composite: f64,
    pub suggestion: String,
    pub passed: bool,
}

impl QualityReport {
    /// Build a report from raw dimension scores, computing composite and
    /// pass flag. Scores must already be in [0,5].
    pub fn from_scores(
        logic: f64,
        answer: f64,
        explanation: f64,
        weights: Weights,
        tau: f64,
        suggestion: impl Into<String>,
    ) -> Result<Self, EngineError> {
        let composite = score::composite_score(logic, answer, explanation, weights)?;
        Ok(Self {
            logic,
            answer,
            explanation,
            composite,
            suggestion: suggestion.into(),
            passed: score::passes_threshold(composite, tau),
        })
    }
}

/// Weights for the three quality dimensions. Must be nonnegative and sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub logic: f64,
    pub answer: f64,
    pub explanation: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            logic: 0.2,
            answer: 0.6,
            explanation: 0.2,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.logic < 0.0 || self.answer < 0.0 || self.explanation < 0.0 {
            return Err(EngineError::domain("weights must be nonnegative"));
        }
        let sum = self.logic + self.answer + self.explanation;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::domain(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

/// Knowledge-integration regime for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// No external knowledge: local document search disabled, no stream
    /// monitoring. Web tools remain available to the tool loop.
    None,
    /// Retrieval available only as an explicit tool call inside code blocks.
    Explicit,
    /// In-stream monitoring with implicit evidence injection.
    Monitor,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Explicit => "explicit",
            Mode::Monitor => "monitor",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EngineError> {
        match s {
            "none" => Ok(Mode::None),
            "explicit" => Ok(Mode::Explicit),
            "monitor" => Ok(Mode::Monitor),
            other => Err(EngineError::Config {
                field: "mode",
                message: format!("expected none|explicit|monitor, got {other:?}"),
            }),
        }
    }
}

/// Ranking strategy for the final selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankerKind {
    /// Ask the provider to pick an index; fall back to composite on a bad answer.
    Llm,
    /// Deterministic: highest composite, ties broken by lowest slot.
    Composite,
}

/// Full workflow configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkflowConfig {
    pub k_proposers: usize,
    pub temperature: f64,
    pub max_tokens: u64,
    /// Window size, in characters, for stream monitoring.
    pub rag_chunk: usize,
    /// Overlap, in characters, between consecutive windows.
    pub rag_overlapping: usize,
    /// Snippets returned per retrieval query.
    pub query_top_k: usize,
    /// Maximum evidence injections per monitored generation.
    pub max_rag: usize,
    /// Quality pass threshold on the composite score.
    pub tau: f64,
    pub weights: Weights,
    /// Maximum quality-loop revision rounds.
    pub t_max: usize,
    pub mode: Mode,
    pub seed: u64,
    pub model: String,
    /// Optional dedicated model for monitor probes.
    pub monitor_model: Option<String>,
    pub ranker: RankerKind,
    /// Run the unconditional per-candidate corrector pass before refinement.
    pub corrector_pass: bool,
    /// Upper bound on concurrent problems in a batch.
    pub parallelism: usize,
    /// Upper bound on tool rounds per role invocation.
    pub max_tool_rounds: usize,
}

impl Default for WorkflowConfig {
    fn default() -> Self {
        Self {
            k_proposers: 5,
            temperature: 0.5,
            max_tokens: 65536,
            rag_chunk: 512,
            rag_overlapping: 128,
            query_top_k: 3,
            max_rag: 2,
            tau: 3.0,
            weights: Weights::default(),
            t_max: 3,
            mode: Mode::Monitor,
            seed: 0,
            model: "deepseek-v3.1".to_string(),
            monitor_model: None,
            ranker: RankerKind::Llm,
            corrector_pass: true,
            parallelism: 4,
            max_tool_rounds: 10,
        }
    }
}

impl WorkflowConfig {
    /// Field-level validation; every violation names the offending field.
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k_proposers == 0 {
            return Err(EngineError::Config {
                field: "k_proposers",
                message: "must be at least 1".into(),
            });
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(EngineError::Config {
                field: "temperature",
                message: format!("must be >= 0, got {}", self.temperature),
            });
        }
        if self.max_tokens == 0 {
            return Err(EngineError::Config {
                field: "max_tokens",
                message: "must be at least 1".into(),
            });
        }
        if self.rag_overlapping == 0 || self.rag_overlapping >= self.rag_chunk {
            return Err(EngineError::Config {
                field: "rag_overlapping",
                message: format!(
                    "need 0 < overlap < chunk, got overlap {} chunk {}",
                    self.rag_overlapping, self.rag_chunk
                ),
            });
        }
        if self.query_top_k == 0 {
            return Err(EngineError::Config {
                field: "query_top_k",
                message: "must be at least 1".into(),
            });
        }
        if !self.tau.is_finite() {
            return Err(EngineError::Config {
                field: "tau",
                message: "must be finite".into(),
            });
        }
        if self.t_max == 0 {
            return Err(EngineError::Config {
                field: "t_max",
                message: "must be at least 1".into(),
            });
        }
        if self.parallelism == 0 {
            return Err(EngineError::Config {
                field: "parallelism",
                message: "must be at least 1".into(),
            });
        }
        self.weights.validate().map_err(|e| EngineError::Config {
            field: "weights",
            message: e.to_string(),
        })
    }
}

/// Reports keyed by candidate id, ordered for deterministic serialization.
pub type ReportMap = BTreeMap<String, QualityReport>;
