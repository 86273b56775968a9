//! Run artifacts on disk: results, events, and call logs as JSONL, plus the
//! run manifest. Readers and writers live together so every emitted file is
//! parseable by the module's own readers.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calls::CallRecord;
use crate::error::EngineError;
use crate::monitor::TriggerEvent;
use crate::orchestrator::{BatchOutput, RunOutcome};
use crate::types::{Problem, WorkflowConfig};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Reproducibility record emitted alongside results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub engine_version: String,
    pub config: WorkflowConfig,
    pub problems_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_digest: Option<String>,
    pub started_at_epoch_ms: u64,
    pub finished_at_epoch_ms: u64,
    pub outcome_count: usize,
    pub error_count: usize,
}

/// sha-256 hex digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, EngineError> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn epoch_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), EngineError> {
    let mut file = std::fs::File::create(path)?;
    for item in items {
        serde_json::to_writer(&mut file, &item)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EngineError> {
    let file = std::fs::File::open(path)?;
    let mut items = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line)?);
    }
    Ok(items)
}

/// Paths of the four files one run emits.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub results: PathBuf,
    pub events: PathBuf,
    pub calls: PathBuf,
    pub manifest: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            results: dir.join("results.jsonl"),
            events: dir.join("events.jsonl"),
            calls: dir.join("calls.jsonl"),
            manifest: dir.join("manifest.json"),
        }
    }
}

/// Write results, events, calls, and the manifest into `out_dir`. The
/// manifest lands last, via a temp-file rename, so a manifest's presence
/// means the results beside it are complete.
pub fn write_run_artifacts(
    out_dir: &Path,
    batch: &BatchOutput,
    manifest: &RunManifest,
) -> Result<RunArtifacts, EngineError> {
    std::fs::create_dir_all(out_dir)?;
    let paths = RunArtifacts::in_dir(out_dir);
    write_jsonl(&paths.results, batch.outcomes.iter())?;
    write_jsonl(
        &paths.events,
        batch.outcomes.iter().flat_map(|o| o.trigger_events.iter()),
    )?;
    write_jsonl(&paths.calls, batch.calls.iter())?;
    let tmp = paths.manifest.with_extension("json.tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut file, manifest)?;
        file.write_all(b"\n")?;
    }
    std::fs::rename(&tmp, &paths.manifest)?;
    Ok(paths)
}

pub fn read_results(path: &Path) -> Result<Vec<RunOutcome>, EngineError> {
    read_jsonl(path)
}

pub fn read_events(path: &Path) -> Result<Vec<TriggerEvent>, EngineError> {
    read_jsonl(path)
}

pub fn read_calls(path: &Path) -> Result<Vec<CallRecord>, EngineError> {
    read_jsonl(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, EngineError> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(file)?)
}

/// Load problems from JSONL: `{"id", "question", "answer"?, "choices"?,
/// "category"?}`. Malformed lines are errors here; the corpus commands have
/// their own skip-with-warning policy.
pub fn read_problems(path: &Path) -> Result<Vec<Problem>, EngineError> {
    let problems: Vec<Problem> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for problem in &problems {
        problem.validate()?;
        if !seen.insert(problem.id.clone()) {
            return Err(EngineError::domain(format!(
                "duplicate problem id {}",
                problem.id
            )));
        }
    }
    Ok(problems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::CostLedger;
    use crate::types::{Candidate, Mode, Stage};

    fn outcome(problem_id: &str) -> RunOutcome {
        let candidate = Candidate {
            id: "p0".into(),
            problem_id: problem_id.into(),
            text: "text".into(),
            final_answer: None,
            stage: Stage::Ranked,
            anchor_of: None,
            reference_ids: vec![],
            revision_round: 0,
        };
        RunOutcome {
            schema_version: crate::orchestrator::RESULTS_SCHEMA_VERSION,
            problem_id: problem_id.into(),
            attempt: 0,
            mode: Mode::None,
            final_candidate: candidate.clone(),
            candidates: vec![candidate],
            reports: Default::default(),
            qair_states: vec![],
            trigger_events: vec![],
            ledger: CostLedger::zero(),
            warnings: vec![],
            wall_time_ms: 123,
        }
    }

    #[test]
    fn artifacts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let batch = BatchOutput {
            outcomes: vec![outcome("p1"), outcome("p2")],
            errors: vec![],
            calls: vec![],
        };
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            engine_version: "test".into(),
            config: WorkflowConfig::default(),
            problems_digest: "abc".into(),
            script_digest: None,
            started_at_epoch_ms: 1,
            finished_at_epoch_ms: 2,
            outcome_count: 2,
            error_count: 0,
        };
        let paths = write_run_artifacts(dir.path(), &batch, &manifest).unwrap();
        let results = read_results(&paths.results).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].problem_id, "p1");
        // Wall time never serializes.
        assert_eq!(results[0].wall_time_ms, 0);
        let m = read_manifest(&paths.manifest).unwrap();
        assert_eq!(m.outcome_count, 2);
        assert!(read_events(&paths.events).unwrap().is_empty());
        assert!(read_calls(&paths.calls).unwrap().is_empty());
    }

    #[test]
    fn problems_reader_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problems.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"question\":\"q\"}\n{\"id\":\"a\",\"question\":\"q2\"}\n",
        )
        .unwrap();
        assert!(read_problems(&path).is_err());
    }

    #[test]
    fn problems_reader_accepts_answer_alias() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problems.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"question\":\"q\",\"answer\":\"42\",\"category\":\"reasoning\"}\n",
        )
        .unwrap();
        let problems = read_problems(&path).unwrap();
        assert_eq!(problems[0].gold_answer.as_deref(), Some("42"));
    }
}
