//! End-to-end workflow execution: propose, correct, refine, quality loop,
//! rank — with full cost accounting and deterministic batching.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calls::{CallLog, CallRecord};
use crate::error::EngineError;
use crate::ledger::CostLedger;
use crate::monitor::TriggerEvent;
use crate::provider::Provider;
use crate::retrieval::Retriever;
use crate::stages::{QairState, StageRunner};
use crate::tools::WebAdapter;
use crate::types::{Candidate, Mode, Problem, ReportMap, Stage, WorkflowConfig};

/// Schema tag written into serialized outcomes.
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Everything one solve produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub schema_version: u32,
    pub problem_id: String,
    /// Attempt index within the batch (0-based).
    pub attempt: usize,
    pub mode: Mode,
    pub final_candidate: Candidate,
    /// Every candidate created, in stage order (each carries its stage).
    pub candidates: Vec<Candidate>,
    pub reports: ReportMap,
    pub qair_states: Vec<QairState>,
    pub trigger_events: Vec<TriggerEvent>,
    pub ledger: CostLedger,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Wall time is observational only and never serialized, so outputs
    /// stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time_ms: u64,
}

/// A per-problem failure inside a batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunError {
    pub problem_id: String,
    pub attempt: usize,
    pub error: String,
}

/// Batch output: outcomes ordered by (problem index, attempt index), errors
/// recorded without stopping the batch.
#[derive(Debug, Default)]
pub struct BatchOutput {
    pub outcomes: Vec<RunOutcome>,
    pub errors: Vec<RunError>,
    pub calls: Vec<CallRecord>,
}

/// Stable seed derivation: base seed plus string tags, hashed. Batches stay
/// reproducible and attempts independent.
pub fn derive_seed(base: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for tag in tags {
        hasher.update([0x1f]);
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is long enough"))
}

/// Workflow executor bound to a provider and retrieval backend.
pub struct Orchestrator<'a> {
    pub provider: &'a dyn Provider,
    pub retriever: Option<&'a dyn Retriever>,
    pub web: &'a dyn WebAdapter,
    pub catalog: &'a crate::provider::TemplateCatalog,
    pub config: &'a WorkflowConfig,
}

impl<'a> Orchestrator<'a> {
    fn runner(&self) -> StageRunner<'a> {
        StageRunner {
            provider: self.provider,
            retriever: self.retriever,
            web: self.web,
            catalog: self.catalog,
            config: self.config,
        }
    }

    /// Solve one problem end to end. `run_seed` scopes all derived seeds;
    /// use [`derive_seed`] from the config seed for batch attempts.
    pub fn solve_with_seed(
        &self,
        problem: &Problem,
        attempt: usize,
        run_seed: u64,
        log: &mut CallLog,
    ) -> Result<RunOutcome, EngineError> {
        self.config.validate()?;
        problem.validate()?;
        let started = Instant::now();
        let runner = self.runner();
        let mut warnings: Vec<String> = Vec::new();
        let mut all_candidates: Vec<Candidate> = Vec::new();
        let mut trigger_events: Vec<TriggerEvent> = Vec::new();

        // Proposers fan out with per-slot seeds; failures drop the slot.
        let slots: Vec<usize> = (0..self.config.k_proposers).collect();
        let proposals = runner_fan(&runner, &slots, |&slot, task_log| {
            let seed = derive_seed(run_seed, &["proposer", &slot.to_string()]);
            runner.propose(problem, slot, seed, task_log)
        });
        let mut survivors: Vec<Candidate> = Vec::new();
        for (slot, (result, task_log)) in slots.iter().zip(proposals) {
            log.records.extend(task_log.records);
            match result {
                Ok((candidate, events)) => {
                    trigger_events.extend(events);
                    all_candidates.push(candidate.clone());
                    survivors.push(candidate);
                }
                Err(e) => {
                    warnings.push(format!("proposer slot {slot} failed to generate: {e}"));
                }
            }
        }
        if survivors.is_empty() {
            return Err(EngineError::AllProposalsFailed(self.config.k_proposers));
        }

        // Unconditional per-candidate correction pass (configurable off).
        let working = if self.config.corrector_pass {
            let corrected = runner_fan(&runner, &survivors, |candidate, task_log| {
                let mut task_warnings = Vec::new();
                let result = runner.correct(
                    problem,
                    candidate,
                    None,
                    run_seed,
                    task_log,
                    &mut task_warnings,
                );
                (result, task_warnings)
            });
            let mut out = Vec::with_capacity(survivors.len());
            for ((result, task_warnings), task_log) in corrected {
                log.records.extend(task_log.records);
                warnings.extend(task_warnings);
                out.push(result?);
            }
            all_candidates.extend(out.iter().cloned());
            out
        } else {
            survivors.clone()
        };

        // Anchor-rotation refinement.
        let refined = runner.hsr_round(problem, &working, run_seed, log, &mut warnings)?;
        for candidate in &refined {
            if candidate.stage == Stage::HsrRefined {
                all_candidates.push(candidate.clone());
            }
        }

        // Quality loop.
        let (finalists, qair_states, reports) =
            runner.qair_loop(problem, refined, run_seed, log, &mut warnings)?;
        for candidate in &finalists {
            if candidate.stage == Stage::QairRevised {
                all_candidates.push(candidate.clone());
            }
        }

        // Final selection.
        let winner = runner.rank(problem, &finalists, &reports, run_seed, log)?;
        let mut final_candidate = winner.clone();
        final_candidate.stage = Stage::Ranked;

        log.stamp_problem(&problem.id);
        for event in &mut trigger_events {
            event.problem_id = Some(problem.id.clone());
        }
        let ledger = log.total()?;
        Ok(RunOutcome {
            schema_version: RESULTS_SCHEMA_VERSION,
            problem_id: problem.id.clone(),
            attempt,
            mode: self.config.mode,
            final_candidate,
            candidates: all_candidates,
            reports,
            qair_states,
            trigger_events,
            ledger,
            warnings,
            wall_time_ms: started.elapsed().as_millis() as u64,
        })
    }

    /// Solve one problem with the seed derived from (config seed, problem
    /// id, attempt 0).
    pub fn solve(&self, problem: &Problem, log: &mut CallLog) -> Result<RunOutcome, EngineError> {
        let run_seed = derive_seed(self.config.seed, &[&problem.id, "0"]);
        self.solve_with_seed(problem, 0, run_seed, log)
    }

    /// Run `attempts` independent solves per problem. Outcomes are ordered
    /// by (problem index, attempt index); per-problem errors are recorded
    /// and the batch continues. Work is spread over `config.parallelism`
    /// threads.
    pub fn run_batch(&self, problems: &[Problem], attempts: usize) -> Result<BatchOutput, EngineError> {
        if attempts == 0 {
            return Err(EngineError::domain("attempts must be at least 1"));
        }
        self.config.validate()?;
        let mut ids = std::collections::HashSet::new();
        for problem in problems {
            problem.validate()?;
            if !ids.insert(problem.id.as_str()) {
                return Err(EngineError::domain(format!(
                    "duplicate problem id {} in batch",
                    problem.id
                )));
            }
        }
        let jobs: Vec<(usize, usize)> = (0..problems.len())
            .flat_map(|p| (0..attempts).map(move |a| (p, a)))
            .collect();
        let workers = self.config.parallelism.min(jobs.len().max(1));

        type JobResult = (usize, Result<RunOutcome, EngineError>, CallLog);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let mut results: Vec<JobResult> = std::thread::scope(|scope| {
            let jobs = &jobs;
            let next = &next;
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(move || {
                        let mut local: Vec<JobResult> = Vec::new();
                        loop {
                            let job = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                            if job >= jobs.len() {
                                break;
                            }
                            let (p_idx, a_idx) = jobs[job];
                            let problem = &problems[p_idx];
                            let run_seed = derive_seed(
                                self.config.seed,
                                &[&problem.id, &a_idx.to_string()],
                            );
                            let mut log = CallLog::new();
                            let outcome =
                                self.solve_with_seed(problem, a_idx, run_seed, &mut log);
                            local.push((job, outcome, log));
                        }
                        local
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("batch worker panicked"))
                .collect()
        });
        // Deterministic order regardless of which worker ran which job.
        results.sort_by_key(|(job, _, _)| *job);

        let mut output = BatchOutput::default();
        for (job, result, log) in results {
            let (p_idx, a_idx) = jobs[job];
            output.calls.extend(log.records);
            match result {
                Ok(outcome) => output.outcomes.push(outcome),
                Err(e) => output.errors.push(RunError {
                    problem_id: problems[p_idx].id.clone(),
                    attempt: a_idx,
                    error: e.to_string(),
                }),
            }
        }
        Ok(output)
    }
}

/// Index-ordered fan-out that mirrors `StageRunner::fan_out` for
/// orchestrator-level stages.
fn runner_fan<'r, I: Sync, R: Send>(
    _runner: &StageRunner<'r>,
    inputs: &[I],
    task: impl Fn(&I, &mut CallLog) -> R + Sync,
) -> Vec<(R, CallLog)> {
    if inputs.len() <= 1 {
        return inputs
            .iter()
            .map(|input| {
                let mut log = CallLog::new();
                let r = task(input, &mut log);
                (r, log)
            })
            .collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|input| {
                scope.spawn(|| {
                    let mut log = CallLog::new();
                    let r = task(input, &mut log);
                    (r, log)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fan-out task panicked"))
            .collect()
    })
}
