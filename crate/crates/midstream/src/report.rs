//! Per-mode cost report: token totals, step counts, and the trigger-rate
//! identity behind the injection statistics.
//!
//! The identity: triggers-per-10k-chars times mean-tokens-per-trigger equals
//! injected-tokens-per-10k-chars, exactly by construction; the report keeps
//! both sides plus their delta as a self-check column.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::EngineError;
use crate::ledger::CostLedger;
use crate::orchestrator::RunOutcome;

/// One report row (one mode).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: String,
    pub total_tokens_k: f64,
    pub agent_steps: u64,
    pub monitor_probes: u64,
    pub retrieval_calls: u64,
    pub injections: u64,
    pub triggers_per_10k_chars: f64,
    pub tokens_per_trigger: f64,
    pub injected_tokens_per_10k_chars: f64,
    /// triggers_per_10k_chars * tokens_per_trigger.
    pub identity_product: f64,
    /// |identity_product - injected_tokens_per_10k_chars|.
    pub identity_delta: f64,
}

/// Build one row from an aggregate ledger and injection count.
pub fn row_from_totals(mode: &str, ledger: &CostLedger, injections: u64) -> ReportRow {
    let chars = ledger.chars_generated as f64;
    let injected = ledger.injected_tokens as f64;
    let triggers_per_10k = if chars > 0.0 {
        injections as f64 * 10_000.0 / chars
    } else {
        0.0
    };
    let tokens_per_trigger = if injections > 0 {
        injected / injections as f64
    } else {
        0.0
    };
    let injected_per_10k = if chars > 0.0 {
        injected * 10_000.0 / chars
    } else {
        0.0
    };
    let product = triggers_per_10k * tokens_per_trigger;
    ReportRow {
        mode: mode.to_string(),
        total_tokens_k: (ledger.tokens_in + ledger.tokens_out) as f64 / 1000.0,
        agent_steps: ledger.agent_steps,
        monitor_probes: ledger.monitor_probes,
        retrieval_calls: ledger.retrieval_calls,
        injections,
        triggers_per_10k_chars: triggers_per_10k,
        tokens_per_trigger,
        injected_tokens_per_10k_chars: injected_per_10k,
        identity_product: product,
        identity_delta: (product - injected_per_10k).abs(),
    }
}

/// Aggregate outcomes into per-mode rows, sorted by mode name.
pub fn rows_from_outcomes(outcomes: &[RunOutcome]) -> Result<Vec<ReportRow>, EngineError> {
    let mut by_mode: BTreeMap<String, (CostLedger, u64)> = BTreeMap::new();
    for outcome in outcomes {
        let entry = by_mode
            .entry(outcome.mode.as_str().to_string())
            .or_insert((CostLedger::zero(), 0));
        entry.0.absorb(&outcome.ledger)?;
        entry.1 += outcome
            .trigger_events
            .iter()
            .filter(|e| e.injected())
            .count() as u64;
    }
    Ok(by_mode
        .iter()
        .map(|(mode, (ledger, injections))| row_from_totals(mode, ledger, *injections))
        .collect())
}

pub const CSV_HEADER: &str = "mode,total_tokens_k,agent_steps,monitor_probes,retrieval_calls,injections,triggers_per_10k_chars,tokens_per_trigger,injected_tokens_per_10k_chars,identity_product,identity_delta";

/// Render rows as CSV with fixed formatting, so equal inputs give
/// byte-equal files.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{:.1},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.6}\n",
            row.mode,
            row.total_tokens_k,
            row.agent_steps,
            row.monitor_probes,
            row.retrieval_calls,
            row.injections,
            row.triggers_per_10k_chars,
            row.tokens_per_trigger,
            row.injected_tokens_per_10k_chars,
            row.identity_product,
            row.identity_delta,
        ));
    }
    out
}

/// Parse a CSV produced by [`to_csv`]. Every emitted file must round-trip
/// through this reader.
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, EngineError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| EngineError::domain("empty report"))?;
    if header != CSV_HEADER {
        return Err(EngineError::domain(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 11 {
            return Err(EngineError::domain(format!(
                "report line {}: expected 11 cells, got {}",
                i + 2,
                cells.len()
            )));
        }
        let num =
            |s: &str| -> Result<f64, EngineError> {
                s.parse()
                    .map_err(|e| EngineError::domain(format!("report line {}: {e}", i + 2)))
            };
        let int = |s: &str| -> Result<u64, EngineError> {
            s.parse()
                .map_err(|e| EngineError::domain(format!("report line {}: {e}", i + 2)))
        };
        rows.push(ReportRow {
            mode: cells[0].to_string(),
            total_tokens_k: num(cells[1])?,
            agent_steps: int(cells[2])?,
            monitor_probes: int(cells[3])?,
            retrieval_calls: int(cells[4])?,
            injections: int(cells[5])?,
            triggers_per_10k_chars: num(cells[6])?,
            tokens_per_trigger: num(cells[7])?,
            injected_tokens_per_10k_chars: num(cells[8])?,
            identity_product: num(cells[9])?,
            identity_delta: num(cells[10])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_holds_on_reference_figures() {
        // 364 injections over one million characters at 64,125 injected
        // tokens gives exactly 3.64 triggers and 641.25 injected tokens per
        // 10k characters.
        let ledger = CostLedger {
            chars_generated: 1_000_000,
            injected_tokens: 64_125,
            ..CostLedger::zero()
        };
        let row = row_from_totals("monitor", &ledger, 364);
        assert!((row.triggers_per_10k_chars - 3.64).abs() < 1e-12);
        assert!((row.injected_tokens_per_10k_chars - 641.25).abs() < 1e-12);
        assert!(row.identity_delta < 0.01);
    }

    #[test]
    fn zero_injection_row_has_no_nans() {
        let row = row_from_totals("none", &CostLedger::zero(), 0);
        assert_eq!(row.triggers_per_10k_chars, 0.0);
        assert_eq!(row.tokens_per_trigger, 0.0);
        assert_eq!(row.injected_tokens_per_10k_chars, 0.0);
        assert_eq!(row.identity_delta, 0.0);
    }

    #[test]
    fn csv_is_stable() {
        let ledger = CostLedger {
            tokens_in: 1500,
            tokens_out: 2500,
            agent_steps: 21,
            ..CostLedger::zero()
        };
        let rows = vec![row_from_totals("explicit", &ledger, 0)];
        let a = to_csv(&rows);
        let b = to_csv(&rows);
        assert_eq!(a, b);
        assert!(a.starts_with("mode,total_tokens_k"));
        assert!(a.contains("explicit,4.0,21,0,0,0,"));
    }

    #[test]
    fn csv_round_trips_through_own_reader() {
        let ledger = CostLedger {
            tokens_in: 900,
            tokens_out: 2100,
            agent_steps: 27,
            monitor_probes: 8,
            retrieval_calls: 2,
            injected_tokens: 120,
            chars_generated: 2000,
            ..CostLedger::zero()
        };
        let rows = vec![
            row_from_totals("explicit", &CostLedger::zero(), 0),
            row_from_totals("monitor", &ledger, 2),
        ];
        let parsed = parse_csv(&to_csv(&rows)).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].mode, "monitor");
        assert_eq!(parsed[1].agent_steps, 27);
        assert_eq!(parsed[1].injections, 2);
        assert!((parsed[1].triggers_per_10k_chars - rows[1].triggers_per_10k_chars).abs() < 1e-4);
    }

    #[test]
    fn parse_rejects_foreign_headers() {
        assert!(parse_csv("not,a,report\n").is_err());
        assert!(parse_csv("").is_err());
    }
}
