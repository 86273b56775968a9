//! Per-call accounting records.
//!
//! Every provider call, monitor probe, and retrieval produces one record
//! carrying its own ledger delta. The run ledger is the exact merge of these
//! deltas, so step and token accounting can always be recomputed from the
//! call log alone.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::ledger::CostLedger;
use crate::provider::{make_match_key, roles, Completion, GenParams, Message, Provider};

/// What kind of event a record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    /// A role-level LLM invocation. Counts as an agent step for step roles.
    Call,
    /// A generation resume after an evidence injection. Same role, no step.
    Continuation,
    /// A follow-up LLM call carrying tool feedback. Counts as a tool round.
    ToolRound,
    /// A retrieval-index query. No LLM involved.
    Retrieval,
}

/// One call-log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: String,
    pub template_id: String,
    pub match_key: String,
    pub kind: CallKind,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub duration_ms: u64,
    /// This event's exact contribution to the run ledger.
    pub delta: CostLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_id: Option<String>,
}

/// Append-only log of call records for one run.
#[derive(Debug, Default)]
pub struct CallLog {
    pub records: Vec<CallRecord>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: CallRecord) {
        self.records.push(record);
    }

    /// Merge of every record's delta.
    pub fn total(&self) -> Result<CostLedger, EngineError> {
        CostLedger::merge_all(self.records.iter().map(|r| &r.delta))
    }

    /// Recount agent steps from record kinds and roles, independently of the
    /// ledger deltas.
    pub fn recount_agent_steps(&self) -> u64 {
        self.records
            .iter()
            .filter(|r| match r.kind {
                CallKind::Call => roles::STEP_ROLES.contains(&r.role.as_str()),
                CallKind::ToolRound => true,
                _ => false,
            })
            .count() as u64
    }

    pub fn recount_monitor_probes(&self) -> u64 {
        self.records
            .iter()
            .filter(|r| r.role == roles::MONITOR)
            .count() as u64
    }

    pub fn stamp_problem(&mut self, problem_id: &str) {
        for r in &mut self.records {
            r.problem_id = Some(problem_id.to_string());
        }
    }
}

/// Issue one LLM call and log it. `kind` decides step accounting: `Call`
/// records for step roles get one agent step, monitor probes get one probe,
/// continuations get neither.
pub fn call_llm(
    provider: &dyn Provider,
    log: &mut CallLog,
    role: &str,
    template_id: &str,
    messages: &[Message],
    params: &GenParams,
    kind: CallKind,
) -> Result<Completion, EngineError> {
    let match_key = make_match_key(role, messages);
    let start = Instant::now();
    let completion = provider.complete(role, messages, params)?;
    let is_probe = role == roles::MONITOR;
    let counts_step = match kind {
        CallKind::Call => !is_probe && roles::STEP_ROLES.contains(&role),
        CallKind::ToolRound => true,
        _ => false,
    };
    let delta = CostLedger {
        tokens_in: completion.tokens_in,
        tokens_out: completion.tokens_out,
        llm_calls: 1,
        agent_steps: counts_step as u64,
        monitor_probes: is_probe as u64,
        ..CostLedger::zero()
    };
    log.push(CallRecord {
        role: role.to_string(),
        template_id: template_id.to_string(),
        match_key,
        kind,
        tokens_in: completion.tokens_in,
        tokens_out: completion.tokens_out,
        duration_ms: start.elapsed().as_millis() as u64,
        delta,
        problem_id: None,
    });
    Ok(completion)
}

/// Log one retrieval-index query.
pub fn log_retrieval(log: &mut CallLog, query: &str, duration_ms: u64) {
    log.push(CallRecord {
        role: "retrieval".to_string(),
        template_id: String::new(),
        match_key: query.to_string(),
        kind: CallKind::Retrieval,
        tokens_in: 0,
        tokens_out: 0,
        duration_ms,
        delta: CostLedger {
            retrieval_calls: 1,
            ..CostLedger::zero()
        },
        problem_id: None,
    });
}

/// Add an extra delta onto the most recent record (used to attribute
/// injected tokens and generated characters to the call that produced them).
pub fn amend_last(log: &mut CallLog, extra: CostLedger) -> Result<(), EngineError> {
    if let Some(last) = log.records.last_mut() {
        last.delta.absorb(&extra)?;
    }
    Ok(())
}
