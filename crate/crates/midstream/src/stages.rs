//! The role agents of the workflow: Proposer, Corrector, peer-refinement
//! Refiner, quality Evaluator, and Ranker, each a provider-driven operation
//! with a strict parsing contract.
//!
//! Fan-out stages aggregate results by candidate slot, never by completion
//! order, so outcomes are independent of task scheduling.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::calls::{call_llm, log_retrieval, CallKind, CallLog};
use crate::error::EngineError;
use crate::judge::{extract_final_answer, strip_code_fences};
use crate::monitor::{MonitorRag, TriggerEvent};
use crate::provider::{roles, template_ids, GenParams, Message, Provider, TemplateCatalog};
use crate::retrieval::Retriever;
use crate::tools::{execute_tool_block, ToolCall, ToolContext, ToolFn, WebAdapter};
use crate::types::{
    Candidate, Mode, Problem, QualityReport, RankerKind, ReportMap, Stage, WorkflowConfig,
};

/// Anchor plus ordered peer references for one refinement call.
#[derive(Debug, Clone)]
pub struct RefinementInput {
    pub anchor: Candidate,
    /// Ascending candidate index; never contains the anchor.
    pub references: Vec<Candidate>,
}

/// One round of the quality loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QairState {
    pub round: usize,
    pub evaluated: BTreeSet<String>,
    pub failed: BTreeSet<String>,
    pub reports: ReportMap,
}

/// Output of one full generation including any tool rounds.
#[derive(Debug, Clone)]
pub struct GenerationOutput {
    pub text: String,
    pub events: Vec<TriggerEvent>,
    pub tool_calls: Vec<ToolCall>,
    pub tool_rounds: usize,
}

/// Stage executor bound to a provider, retriever, and config.
pub struct StageRunner<'a> {
    pub provider: &'a dyn Provider,
    pub retriever: Option<&'a dyn Retriever>,
    pub web: &'a dyn WebAdapter,
    pub catalog: &'a TemplateCatalog,
    pub config: &'a WorkflowConfig,
}

/// A failure the pipeline degrades around instead of aborting: the stage
/// contract decides whether to pass the input through or drop a candidate.
fn is_degradable(err: &EngineError) -> bool {
    matches!(
        err,
        EngineError::Transport(_)
            | EngineError::ScriptMiss { .. }
            | EngineError::MalformedResponse { .. }
    )
}

/// Message builders shared between the stage runner and scripted-fixture
/// authors, so replay scripts key on exactly what the stages send.
pub mod prompts {
    use super::*;

    /// Default suggestion text bound when the corrector runs without one.
    pub const NO_SUGGESTION: &str = "(no suggestion provided; review independently for errors)";

    pub fn proposer_messages(
        catalog: &TemplateCatalog,
        problem: &Problem,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::PROPOSER,
            &[("query", problem.question.clone())].into_iter().collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }

    pub fn corrector_messages(
        catalog: &TemplateCatalog,
        problem: &Problem,
        solution: &str,
        suggestion: Option<&str>,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::CORRECTOR,
            &[
                ("query", problem.question.clone()),
                ("solution", solution.to_string()),
                ("suggestion", suggestion.unwrap_or(NO_SUGGESTION).to_string()),
            ]
            .into_iter()
            .collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }

    /// Reference slots follow the "Student k's Solution" pattern, extended
    /// mechanically past four.
    pub fn references_block(references: &[&str]) -> String {
        let mut block = String::new();
        for (i, text) in references.iter().enumerate() {
            block.push_str(&format!("Student {}'s Solution\n{}\n\n", i + 1, text));
        }
        block
    }

    pub fn refinement_messages(
        catalog: &TemplateCatalog,
        problem: &Problem,
        anchor: &str,
        references: &[&str],
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::REFINEMENT,
            &[
                ("query", problem.question.clone()),
                ("anchor_solution", anchor.to_string()),
                ("references", references_block(references)),
            ]
            .into_iter()
            .collect(),
        )?;
        let prefix = catalog
            .raw(template_ids::REFINEMENT_PREFIX)
            .unwrap_or_default()
            .to_string();
        Ok(vec![Message::user(prompt), Message::assistant(prefix)])
    }

    pub fn evaluator_messages(
        catalog: &TemplateCatalog,
        problem: &Problem,
        solution: &str,
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::EVALUATOR,
            &[
                ("query", problem.question.clone()),
                ("solution", solution.to_string()),
            ]
            .into_iter()
            .collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }

    /// Candidates are listed in slot order, numbered from zero.
    pub fn ranker_listing(texts: &[&str]) -> String {
        texts
            .iter()
            .enumerate()
            .map(|(i, text)| format!("Candidate {i}:\n{text}\n"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn ranker_messages(
        catalog: &TemplateCatalog,
        problem: &Problem,
        texts: &[&str],
    ) -> Result<Vec<Message>, EngineError> {
        let prompt = catalog.render(
            template_ids::RANKER,
            &[
                ("query", problem.question.clone()),
                ("candidates", ranker_listing(texts)),
            ]
            .into_iter()
            .collect(),
        )?;
        Ok(vec![Message::user(prompt)])
    }
}

impl<'a> StageRunner<'a> {
    fn params(&self, seed: u64) -> GenParams {
        GenParams {
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            seed,
        }
    }

    /// Local document search is wired up outside the no-external-knowledge
    /// regime only.
    fn tool_retriever(&self) -> Option<&'a dyn Retriever> {
        match self.config.mode {
            Mode::None => None,
            _ => self.retriever,
        }
    }

    /// One full generation: an initial completion (monitored in monitor
    /// mode when `monitored` is set), then up to `max_tool_rounds` tool
    /// rounds driven by `<code>` blocks in the newly generated text.
    fn generate(
        &self,
        role: &'static str,
        template_id: &'static str,
        base_messages: Vec<Message>,
        seed: u64,
        monitored: bool,
        log: &mut CallLog,
    ) -> Result<GenerationOutput, EngineError> {
        let mut events = Vec::new();
        let mut latest = if monitored {
            let retriever = self
                .retriever
                .ok_or_else(|| EngineError::domain("monitored generation requires a retriever"))?;
            let out = MonitorRag::new(self.provider, retriever, self.catalog, self.config)
                .monitored_generate(role, template_id, &base_messages, seed, log)?;
            events = out.events;
            out.text
        } else {
            call_llm(
                self.provider,
                log,
                role,
                template_id,
                &base_messages,
                &self.params(seed),
                CallKind::Call,
            )?
            .text
        };

        let mut full_text = latest.clone();
        let mut tool_calls = Vec::new();
        let mut tool_rounds = 0;
        let ctx = ToolContext::new(self.tool_retriever(), self.web, self.config.query_top_k);
        while tool_rounds < self.config.max_tool_rounds {
            let (calls, feedback) = execute_tool_block(&latest, &ctx);
            if calls.is_empty() && feedback.is_empty() {
                break;
            }
            if self.tool_retriever().is_some() {
                for call in &calls {
                    if call.function == ToolFn::SearchLocalDocuments {
                        log_retrieval(log, &call.args[0], 0);
                    }
                }
            }
            tool_calls.extend(calls);
            full_text.push_str("\n[tool output]\n");
            full_text.push_str(&feedback);
            full_text.push_str("\n[/tool output]\n");
            let mut messages = base_messages.clone();
            messages.push(Message::assistant(full_text.clone()));
            messages.push(Message::tool(feedback));
            let completion = call_llm(
                self.provider,
                log,
                role,
                template_id,
                &messages,
                &self.params(seed),
                CallKind::ToolRound,
            )?;
            tool_rounds += 1;
            latest = completion.text;
            full_text.push_str(&latest);
        }

        Ok(GenerationOutput {
            text: full_text,
            events,
            tool_calls,
            tool_rounds,
        })
    }

    /// Generate one initial candidate. In monitor mode the generation runs
    /// through the monitored stream; in the other modes it is a plain
    /// completion with the tool loop active.
    pub fn propose(
        &self,
        problem: &Problem,
        slot: usize,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<(Candidate, Vec<TriggerEvent>), EngineError> {
        let messages = prompts::proposer_messages(self.catalog, problem)?;
        let monitored = self.config.mode == Mode::Monitor;
        let out = self.generate(
            roles::PROPOSER,
            template_ids::PROPOSER,
            messages,
            seed,
            monitored,
            log,
        )?;
        let id = format!("p{slot}");
        let mut events = out.events;
        for event in &mut events {
            event.problem_id = Some(problem.id.clone());
            event.candidate_id = Some(id.clone());
        }
        let candidate = Candidate {
            id,
            problem_id: problem.id.clone(),
            text: out.text.clone(),
            final_answer: extract_final_answer(&out.text),
            stage: Stage::Proposed,
            anchor_of: None,
            reference_ids: Vec::new(),
            revision_round: 0,
        };
        Ok((candidate, events))
    }

    /// Targeted single-candidate revision. With a suggestion the output is a
    /// quality-loop revision; without one it is the plain pre-refinement
    /// correction pass. Provider failure degrades to passing the input
    /// through unchanged.
    pub fn correct(
        &self,
        problem: &Problem,
        candidate: &Candidate,
        suggestion: Option<&str>,
        seed: u64,
        log: &mut CallLog,
        warnings: &mut Vec<String>,
    ) -> Result<Candidate, EngineError> {
        if candidate.text.is_empty() {
            return Err(EngineError::domain("candidate text must be non-empty"));
        }
        let messages =
            prompts::corrector_messages(self.catalog, problem, &candidate.text, suggestion)?;
        let completion = match call_llm(
            self.provider,
            log,
            roles::CORRECTOR,
            template_ids::CORRECTOR,
            &messages,
            &self.params(seed),
            CallKind::Call,
        ) {
            Ok(c) => c,
            Err(e) if is_degradable(&e) => {
                warnings.push(format!("corrector failed for {}: {e}; passed through", candidate.id));
                return Ok(candidate.clone());
            }
            Err(e) => return Err(e),
        };
        let revision_round = candidate.revision_round + 1;
        let (id, stage) = match suggestion {
            Some(_) => (
                format!("{}.{revision_round}", base_id(&candidate.id)),
                Stage::QairRevised,
            ),
            None => (format!("c{}", candidate.slot()), Stage::Corrected),
        };
        Ok(Candidate {
            id,
            problem_id: candidate.problem_id.clone(),
            text: completion.text.clone(),
            final_answer: extract_final_answer(&completion.text),
            stage,
            anchor_of: Some(candidate.id.clone()),
            reference_ids: Vec::new(),
            revision_round,
        })
    }

    /// One anchor-rotation refinement round: output[i] refines anchor
    /// candidates[i] against all its siblings. Cardinality and order are
    /// preserved; a sole candidate passes through untouched; a failed
    /// refinement falls back to its anchor.
    pub fn hsr_round(
        &self,
        problem: &Problem,
        candidates: &[Candidate],
        seed: u64,
        log: &mut CallLog,
        warnings: &mut Vec<String>,
    ) -> Result<Vec<Candidate>, EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::domain("refinement needs at least one candidate"));
        }
        if candidates.len() == 1 {
            return Ok(vec![candidates[0].clone()]);
        }
        let inputs: Vec<RefinementInput> = (0..candidates.len())
            .map(|i| RefinementInput {
                anchor: candidates[i].clone(),
                references: candidates
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, c)| c.clone())
                    .collect(),
            })
            .collect();

        let results = self.fan_out(&inputs, |input, task_log| {
            self.refine_one(problem, input, seed, task_log)
        });

        let mut refined = Vec::with_capacity(candidates.len());
        for (input, (result, task_log)) in inputs.iter().zip(results) {
            log.records.extend(task_log.records);
            match result {
                Ok(candidate) => refined.push(candidate),
                Err(e) if is_degradable(&e) => {
                    warnings.push(format!(
                        "refinement failed for anchor {}: {e}; anchor kept",
                        input.anchor.id
                    ));
                    refined.push(input.anchor.clone());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(refined)
    }

    /// Render the refinement prompt for one anchor; reference slots extend
    /// mechanically past four.
    pub fn refinement_prompt(
        &self,
        problem: &Problem,
        input: &RefinementInput,
    ) -> Result<String, EngineError> {
        let references: Vec<&str> = input.references.iter().map(|c| c.text.as_str()).collect();
        let messages =
            prompts::refinement_messages(self.catalog, problem, &input.anchor.text, &references)?;
        Ok(messages[0].content.clone())
    }

    fn refine_one(
        &self,
        problem: &Problem,
        input: &RefinementInput,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<Candidate, EngineError> {
        let references: Vec<&str> = input.references.iter().map(|c| c.text.as_str()).collect();
        let messages =
            prompts::refinement_messages(self.catalog, problem, &input.anchor.text, &references)?;
        let out = self.generate(
            roles::REFINER,
            template_ids::REFINEMENT,
            messages,
            seed,
            false,
            log,
        )?;
        Ok(Candidate {
            id: format!("r{}", input.anchor.slot()),
            problem_id: input.anchor.problem_id.clone(),
            text: out.text.clone(),
            final_answer: extract_final_answer(&out.text),
            stage: Stage::HsrRefined,
            anchor_of: Some(input.anchor.id.clone()),
            reference_ids: input.references.iter().map(|c| c.id.clone()).collect(),
            revision_round: 0,
        })
    }

    /// Score one candidate on the three quality dimensions. Malformed JSON
    /// gets one re-prompt; a second failure is an error carrying the raw
    /// text. Scores are clamped into [0,5] with a warning.
    pub fn evaluate_quality(
        &self,
        problem: &Problem,
        candidate: &Candidate,
        seed: u64,
        log: &mut CallLog,
        warnings: &mut Vec<String>,
    ) -> Result<QualityReport, EngineError> {
        if candidate.text.is_empty() {
            return Err(EngineError::domain("candidate text must be non-empty"));
        }
        let messages = prompts::evaluator_messages(self.catalog, problem, &candidate.text)?;
        let mut raw = String::new();
        for attempt in 0..2 {
            let completion = call_llm(
                self.provider,
                log,
                roles::EVALUATOR,
                template_ids::EVALUATOR,
                &messages,
                &self.params(seed),
                CallKind::Call,
            )?;
            raw = completion.text;
            match parse_quality_json(&raw) {
                Ok((scores, suggestion)) => {
                    let mut clamped = [0.0f64; 3];
                    for (i, s) in scores.iter().enumerate() {
                        let (v, out_of_range) = crate::score::clamp_score(*s);
                        if out_of_range {
                            warnings.push(format!(
                                "evaluator score {s} for {} clamped to {v}",
                                candidate.id
                            ));
                        }
                        clamped[i] = v;
                    }
                    return QualityReport::from_scores(
                        clamped[0],
                        clamped[1],
                        clamped[2],
                        self.config.weights,
                        self.config.tau,
                        suggestion,
                    );
                }
                Err(_) if attempt == 0 => continue,
                Err(message) => {
                    return Err(EngineError::MalformedResponse { message, raw });
                }
            }
        }
        Err(EngineError::MalformedResponse {
            message: "evaluator returned no parseable JSON".into(),
            raw,
        })
    }

    /// Quality loop: evaluate all candidates in round 0, then on each
    /// subsequent round evaluate only the corrected versions of the previous
    /// round's failures. Passed candidates are never re-evaluated. The loop
    /// ends when a round has no failures or after round `t_max`.
    pub fn qair_loop(
        &self,
        problem: &Problem,
        candidates: Vec<Candidate>,
        seed: u64,
        log: &mut CallLog,
        warnings: &mut Vec<String>,
    ) -> Result<(Vec<Candidate>, Vec<QairState>, ReportMap), EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::domain("quality loop needs at least one candidate"));
        }
        let mut current = candidates;
        let mut states: Vec<QairState> = Vec::new();
        let mut final_reports = ReportMap::new();
        let mut to_eval: Vec<usize> = (0..current.len()).collect();

        for round in 0..=self.config.t_max {
            let eval_inputs: Vec<Candidate> =
                to_eval.iter().map(|&i| current[i].clone()).collect();
            let results = self.fan_out(&eval_inputs, |candidate, task_log| {
                let mut task_warnings = Vec::new();
                let report =
                    self.evaluate_quality(problem, candidate, seed, task_log, &mut task_warnings);
                (report, task_warnings)
            });

            let mut round_reports = ReportMap::new();
            let mut evaluated = BTreeSet::new();
            let mut failed_ids = BTreeSet::new();
            let mut failed_indices = Vec::new();
            for (&idx, ((result, task_warnings), task_log)) in to_eval.iter().zip(results) {
                log.records.extend(task_log.records);
                warnings.extend(task_warnings);
                let candidate_id = current[idx].id.clone();
                evaluated.insert(candidate_id.clone());
                let report = match result {
                    Ok(report) => report,
                    Err(e) if is_degradable(&e) => {
                        // Keep the candidate, mark it failing, and move on.
                        warnings.push(format!(
                            "evaluator failed for {candidate_id}: {e}; marked non-passing"
                        ));
                        QualityReport {
                            logic: 0.0,
                            answer: 0.0,
                            explanation: 0.0,
                            composite: 0.0,
                            suggestion: "evaluation failed; regenerate with care".to_string(),
                            passed: false,
                        }
                    }
                    Err(e) => return Err(e),
                };
                if !report.passed {
                    failed_ids.insert(candidate_id.clone());
                    failed_indices.push(idx);
                }
                round_reports.insert(candidate_id.clone(), report.clone());
                final_reports.insert(candidate_id, report);
            }
            states.push(QairState {
                round,
                evaluated,
                failed: failed_ids,
                reports: round_reports,
            });

            if failed_indices.is_empty() || round == self.config.t_max {
                break;
            }

            // Correct this round's failures; they form the next evaluation set.
            let fail_inputs: Vec<(usize, Candidate, String)> = failed_indices
                .iter()
                .map(|&i| {
                    let suggestion = final_reports
                        .get(&current[i].id)
                        .map(|r| r.suggestion.clone())
                        .unwrap_or_default();
                    (i, current[i].clone(), suggestion)
                })
                .collect();
            let corrected = self.fan_out(&fail_inputs, |(_, candidate, suggestion), task_log| {
                let mut task_warnings = Vec::new();
                let result = self.correct(
                    problem,
                    candidate,
                    Some(suggestion),
                    seed,
                    task_log,
                    &mut task_warnings,
                );
                (result, task_warnings)
            });
            for ((idx, _, _), ((result, task_warnings), task_log)) in
                fail_inputs.iter().zip(corrected)
            {
                log.records.extend(task_log.records);
                warnings.extend(task_warnings);
                current[*idx] = result?;
            }
            to_eval = failed_indices;
        }

        Ok((current, states, final_reports))
    }

    /// Select the final candidate. The LLM ranker picks an index (strictly
    /// parsed; anything out of range falls back); the fallback is highest
    /// composite with ties broken by lowest slot.
    pub fn rank(
        &self,
        problem: &Problem,
        candidates: &[Candidate],
        reports: &ReportMap,
        seed: u64,
        log: &mut CallLog,
    ) -> Result<Candidate, EngineError> {
        if candidates.is_empty() {
            return Err(EngineError::domain("ranking needs at least one candidate"));
        }
        if candidates.len() == 1 {
            return Ok(candidates[0].clone());
        }
        // Canonical order: by slot, so list position never matters.
        let mut ordered: Vec<&Candidate> = candidates.iter().collect();
        ordered.sort_by_key(|c| c.slot());

        if self.config.ranker == RankerKind::Llm {
            let texts: Vec<&str> = ordered.iter().map(|c| c.text.as_str()).collect();
            let messages = prompts::ranker_messages(self.catalog, problem, &texts)?;
            match call_llm(
                self.provider,
                log,
                roles::RANKER,
                template_ids::RANKER,
                &messages,
                &self.params(seed),
                CallKind::Call,
            ) {
                Ok(completion) => {
                    if let Ok(index) = completion.text.trim().parse::<usize>() {
                        if index < ordered.len() {
                            return Ok(ordered[index].clone());
                        }
                    }
                    // Out-of-range or non-numeric: fall through to composite.
                }
                Err(e) if is_degradable(&e) => {}
                Err(e) => return Err(e),
            }
        }

        let winner = ordered
            .iter()
            .max_by(|a, b| {
                let ca = reports.get(&a.id).map(|r| r.composite).unwrap_or(f64::MIN);
                let cb = reports.get(&b.id).map(|r| r.composite).unwrap_or(f64::MIN);
                ca.partial_cmp(&cb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // max_by keeps the later of equals; prefer the lower slot.
                    .then(b.slot().cmp(&a.slot()))
            })
            .expect("non-empty");
        Ok((*winner).clone())
    }

    /// Run one closure per input on its own thread with a private call log,
    /// then return results in input order.
    fn fan_out<I: Sync, R: Send>(
        &self,
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
                .map(|h| h.join().expect("stage task panicked"))
                .collect()
        })
    }
}

/// Root of a candidate id, without revision suffixes ("r2.1" -> "r2").
fn base_id(id: &str) -> &str {
    id.split('.').next().unwrap_or(id)
}

/// Parse the evaluator's strict JSON contract. Returns (scores, suggestion)
/// or a description of what was wrong.
fn parse_quality_json(raw: &str) -> Result<([f64; 3], String), String> {
    #[derive(Deserialize)]
    struct EvalJson {
        quality_scores: Vec<f64>,
        #[serde(default)]
        suggestion: String,
    }
    let cleaned = strip_code_fences(raw);
    let parsed: EvalJson =
        serde_json::from_str(cleaned).map_err(|e| format!("invalid evaluator JSON: {e}"))?;
    if parsed.quality_scores.len() != 3 {
        return Err(format!(
            "expected 3 quality scores, got {}",
            parsed.quality_scores.len()
        ));
    }
    Ok((
        [
            parsed.quality_scores[0],
            parsed.quality_scores[1],
            parsed.quality_scores[2],
        ],
        parsed.suggestion,
    ))
}
