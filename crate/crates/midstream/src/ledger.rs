//! Mergeable cost ledger shared by every stage of the workflow.
//!
//! Every provider call, retrieval, monitor probe, and tool round produces a
//! small ledger delta; deltas are merged upward at joins so the final run
//! ledger is an exact sum of the per-event ledgers. Ledger merge forms a
//! commutative monoid with [`CostLedger::zero`] as identity.

use serde::{Deserialize, Serialize};

use crate::error::EngineError;

/// Counters for everything the workflow spends.
///
/// All counters are 64-bit; overflow on merge is an error rather than a
/// wraparound. `monitor_probes` is tracked separately from `agent_steps` so
/// both accountings (with and without probes) stay derivable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub llm_calls: u64,
    pub retrieval_calls: u64,
    pub agent_steps: u64,
    pub monitor_probes: u64,
    pub injected_tokens: u64,
    pub chars_generated: u64,
}

impl CostLedger {
    /// The identity ledger: all counters zero.
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }

    /// Fieldwise sum of two ledgers. Overflow in any field is an error.
    pub fn merge(&self, other: &CostLedger) -> Result<CostLedger, EngineError> {
        fn add(a: u64, b: u64, field: &'static str) -> Result<u64, EngineError> {
            a.checked_add(b)
                .ok_or(EngineError::LedgerOverflow { field })
        }
        Ok(CostLedger {
            tokens_in: add(self.tokens_in, other.tokens_in, "tokens_in")?,
            tokens_out: add(self.tokens_out, other.tokens_out, "tokens_out")?,
            llm_calls: add(self.llm_calls, other.llm_calls, "llm_calls")?,
            retrieval_calls: add(self.retrieval_calls, other.retrieval_calls, "retrieval_calls")?,
            agent_steps: add(self.agent_steps, other.agent_steps, "agent_steps")?,
            monitor_probes: add(self.monitor_probes, other.monitor_probes, "monitor_probes")?,
            injected_tokens: add(self.injected_tokens, other.injected_tokens, "injected_tokens")?,
            chars_generated: add(self.chars_generated, other.chars_generated, "chars_generated")?,
        })
    }

    /// In-place merge; the left operand absorbs the right.
    pub fn absorb(&mut self, other: &CostLedger) -> Result<(), EngineError> {
        *self = self.merge(other)?;
        Ok(())
    }

    /// Merge an iterator of ledgers into one.
    pub fn merge_all<'a, I: IntoIterator<Item = &'a CostLedger>>(
        ledgers: I,
    ) -> Result<CostLedger, EngineError> {
        let mut total = CostLedger::zero();
        for ledger in ledgers {
            total.absorb(ledger)?;
        }
        Ok(total)
    }
}
