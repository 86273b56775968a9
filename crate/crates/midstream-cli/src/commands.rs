//! Command implementations.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use midstream::artifacts::{
    self, epoch_ms, file_digest, RunManifest, MANIFEST_SCHEMA_VERSION,
};
use midstream::calls::CallLog;
use midstream::error::EngineError;
use midstream::judge as judging;
use midstream::orchestrator::{Orchestrator, RunOutcome};
use midstream::provider::{
    GenParams, HttpProvider, Provider, ScriptedProvider, TemplateCatalog,
};
use midstream::report as reporting;
use midstream::retrieval::{
    filter_corpus, Document, FilterThresholds, HashEmbedder, KeywordProfile, LexicalIndex,
};
use midstream::tools::StubWebAdapter;
use midstream::types::Mode;

use crate::config::{FileConfig, ProviderConfig};
use crate::{EXIT_CONFIG, EXIT_INTERNAL, EXIT_PROVIDER};

/// CLI failure: carries the exit-code family.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Provider(String),
    Internal(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Provider(m) | CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> (u8, &'static str) {
        match self {
            CliError::Config(_) => (EXIT_CONFIG, "config"),
            CliError::Provider(_) => (EXIT_PROVIDER, "provider"),
            CliError::Internal(_) => (EXIT_INTERNAL, "internal"),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match &err {
            EngineError::Config { .. } | EngineError::Domain(_) => CliError::Config(err.to_string()),
            EngineError::Transport(_) | EngineError::ScriptMiss { .. } => {
                CliError::Provider(err.to_string())
            }
            _ => CliError::Internal(err.to_string()),
        }
    }
}

pub struct RunArgs {
    pub problems: PathBuf,
    pub config: PathBuf,
    pub mode: Option<String>,
    pub out: PathBuf,
    pub attempts: usize,
    pub script: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

enum AnyProvider {
    Scripted(ScriptedProvider),
    Http(HttpProvider),
}

impl AnyProvider {
    fn as_dyn(&self) -> &dyn Provider {
        match self {
            AnyProvider::Scripted(p) => p,
            AnyProvider::Http(p) => p,
        }
    }
}

fn build_provider(
    script: Option<&Path>,
    provider_cfg: &ProviderConfig,
) -> Result<AnyProvider, CliError> {
    match script {
        Some(path) => Ok(AnyProvider::Scripted(ScriptedProvider::from_jsonl(path)?)),
        None => {
            let endpoint = provider_cfg.endpoint.clone().ok_or_else(|| {
                CliError::Config(
                    "endpoint: required for live runs (or pass --script for replay)".into(),
                )
            })?;
            Ok(AnyProvider::Http(HttpProvider::new(
                endpoint,
                provider_cfg.api_key.clone(),
            )))
        }
    }
}

fn build_index(
    corpus: Option<&Path>,
    index: Option<&Path>,
    chunk: usize,
) -> Result<Option<LexicalIndex>, CliError> {
    if let Some(path) = index {
        return Ok(Some(LexicalIndex::load(path)?));
    }
    if let Some(path) = corpus {
        let (docs, _) = read_documents_lenient(path)?;
        return Ok(Some(LexicalIndex::build(&docs, chunk)?));
    }
    Ok(None)
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let started = epoch_ms();
    if args.attempts == 0 {
        return Err(CliError::Config("attempts must be at least 1".into()));
    }
    let (config, provider_cfg) =
        FileConfig::load(&args.config)?.into_workflow(args.mode.as_deref())?;
    let problems = artifacts::read_problems(&args.problems)?;
    if problems.is_empty() {
        return Err(CliError::Config("problems file is empty".into()));
    }
    let provider = build_provider(args.script.as_deref(), &provider_cfg)?;
    let index = build_index(args.corpus.as_deref(), args.index.as_deref(), config.rag_chunk)?;
    if config.mode == Mode::Monitor && index.is_none() {
        return Err(CliError::Config(
            "mode=monitor requires --corpus or --index for retrieval".into(),
        ));
    }
    let web = StubWebAdapter::empty();
    let catalog = TemplateCatalog::builtin();
    let orchestrator = Orchestrator {
        provider: provider.as_dyn(),
        retriever: index
            .as_ref()
            .map(|i| i as &dyn midstream::retrieval::Retriever),
        web: &web,
        catalog: &catalog,
        config: &config,
    };

    let batch = orchestrator.run_batch(&problems, args.attempts)?;
    if batch.outcomes.is_empty() {
        let detail = batch
            .errors
            .first()
            .map(|e| e.error.clone())
            .unwrap_or_else(|| "no outcomes".into());
        return Err(CliError::Provider(format!("every run failed: {detail}")));
    }

    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        problems_digest: file_digest(&args.problems)?,
        script_digest: args.script.as_deref().map(file_digest).transpose()?,
        started_at_epoch_ms: started,
        finished_at_epoch_ms: epoch_ms(),
        outcome_count: batch.outcomes.len(),
        error_count: batch.errors.len(),
    };
    let paths = artifacts::write_run_artifacts(&args.out, &batch, &manifest)?;
    if !batch.errors.is_empty() {
        let mut file = std::fs::File::create(args.out.join("errors.jsonl"))
            .map_err(|e| CliError::Internal(e.to_string()))?;
        for error in &batch.errors {
            serde_json::to_writer(&mut file, error)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            file.write_all(b"\n")
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    println!(
        "{}",
        serde_json::json!({
            "outcomes": batch.outcomes.len(),
            "errors": batch.errors.len(),
            "results": paths.results,
        })
    );
    Ok(())
}

/// Lenient JSONL document reader: malformed lines are skipped with a count.
fn read_documents_lenient(path: &Path) -> Result<(Vec<Document>, usize), CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot read corpus {}: {e}", path.display())))?;
    let mut docs = Vec::new();
    let mut skipped = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Internal(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Document>(&line) {
            Ok(doc) if doc.validate().is_ok() => docs.push(doc),
            Ok(_) | Err(_) => {
                eprintln!("warning: skipping malformed corpus line {}", lineno + 1);
                skipped += 1;
            }
        }
    }
    Ok((docs, skipped))
}

pub fn corpus_filter(
    corpus: PathBuf,
    profile: Option<PathBuf>,
    out: PathBuf,
    positive_min: f64,
    negative_max: f64,
) -> Result<(), CliError> {
    let (mut docs, skipped) = read_documents_lenient(&corpus)?;
    let profile = match profile {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("cannot read profile: {e}")))?;
            serde_json::from_str::<KeywordProfile>(&text)
                .map_err(|e| CliError::Config(format!("profile: {e}")))?
        }
        None => KeywordProfile::builtin(),
    };
    let thresholds = FilterThresholds {
        positive_min,
        negative_max,
        ..FilterThresholds::default()
    };
    let input_count = docs.len();
    let kept = filter_corpus(&mut docs, &profile, &HashEmbedder, &thresholds)?;
    let mut file =
        std::fs::File::create(&out).map_err(|e| CliError::Internal(e.to_string()))?;
    for doc in &kept {
        serde_json::to_writer(&mut file, doc).map_err(|e| CliError::Internal(e.to_string()))?;
        file.write_all(b"\n")
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    println!(
        "{}",
        serde_json::json!({
            "input_count": input_count,
            "kept_count": kept.len(),
            "skipped_count": skipped,
        })
    );
    Ok(())
}

pub fn corpus_index(corpus: PathBuf, out: PathBuf, chunk: usize) -> Result<(), CliError> {
    let (docs, skipped) = read_documents_lenient(&corpus)?;
    let index = LexicalIndex::build(&docs, chunk)?;
    index.save(&out)?;
    println!(
        "{}",
        serde_json::json!({
            "documents": docs.len(),
            "chunks": index.chunk_count(),
            "skipped_count": skipped,
            "index": out,
        })
    );
    Ok(())
}

pub fn corpus_summarize(
    corpus: PathBuf,
    out: PathBuf,
    script: Option<PathBuf>,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let (docs, _) = read_documents_lenient(&corpus)?;
    let file_cfg = match config {
        Some(path) => FileConfig::load(&path)?,
        None => FileConfig::default(),
    };
    let (workflow, provider_cfg) = file_cfg.into_workflow(Some("none"))?;
    let provider = build_provider(script.as_deref(), &provider_cfg)?;
    let catalog = TemplateCatalog::builtin();
    let params = GenParams {
        model: workflow.model.clone(),
        temperature: workflow.temperature,
        max_tokens: workflow.max_tokens,
        seed: workflow.seed,
    };
    let mut file =
        std::fs::File::create(&out).map_err(|e| CliError::Internal(e.to_string()))?;
    for doc in &docs {
        let prompt = catalog.render(
            "summarize",
            &[(
                "paper_content",
                format!("{}\n\n{}", doc.title, doc.body),
            )]
            .into_iter()
            .collect(),
        )?;
        let completion = provider.as_dyn().complete(
            "summarizer",
            &[midstream::provider::Message::user(prompt)],
            &params,
        )?;
        serde_json::to_writer(
            &mut file,
            &serde_json::json!({ "id": doc.id, "summary": completion.text }),
        )
        .map_err(|e| CliError::Internal(e.to_string()))?;
        file.write_all(b"\n")
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    println!("{}", serde_json::json!({ "summarized": docs.len() }));
    Ok(())
}

#[derive(Serialize)]
struct VerdictRecord {
    problem_id: String,
    attempt: usize,
    extracted_final_answer: Option<String>,
    correct: bool,
    confidence: f64,
    reasoning: String,
}

pub fn judge(
    results: PathBuf,
    problems: PathBuf,
    script: Option<PathBuf>,
    out: PathBuf,
    config: Option<PathBuf>,
) -> Result<(), CliError> {
    let outcomes = artifacts::read_results(&results)?;
    if outcomes.is_empty() {
        return Err(CliError::Config("results file is empty".into()));
    }
    let problem_list = artifacts::read_problems(&problems)?;
    let gold: BTreeMap<String, (String, String, Option<String>)> = problem_list
        .iter()
        .filter_map(|p| {
            p.gold_answer.as_ref().map(|g| {
                (
                    p.id.clone(),
                    (p.question.clone(), g.clone(), p.category.clone()),
                )
            })
        })
        .collect();
    let file_cfg = match config {
        Some(path) => FileConfig::load(&path)?,
        None => FileConfig::default(),
    };
    let (workflow, provider_cfg) = file_cfg.into_workflow(Some("none"))?;
    let provider = build_provider(script.as_deref(), &provider_cfg)?;
    let catalog = TemplateCatalog::builtin();
    let params = GenParams {
        model: workflow.model.clone(),
        temperature: workflow.temperature,
        max_tokens: workflow.max_tokens,
        seed: workflow.seed,
    };
    let mut log = CallLog::new();
    let mut warnings = Vec::new();

    // Group outcomes by problem, ordered by attempt.
    let mut by_problem: BTreeMap<String, Vec<&RunOutcome>> = BTreeMap::new();
    for outcome in &outcomes {
        by_problem
            .entry(outcome.problem_id.clone())
            .or_default()
            .push(outcome);
    }
    for attempts in by_problem.values_mut() {
        attempts.sort_by_key(|o| o.attempt);
    }

    std::fs::create_dir_all(&out).map_err(|e| CliError::Internal(e.to_string()))?;
    let verdicts_path = out.join("verdicts.jsonl");
    let summary_path = out.join("summary.csv");
    let mut verdict_file =
        std::fs::File::create(&verdicts_path).map_err(|e| CliError::Internal(e.to_string()))?;

    let mut verdict_matrix: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    let mut summary_rows: Vec<String> = Vec::new();
    let mut category_points: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut skipped_no_gold = 0usize;

    for (problem_id, attempts) in &by_problem {
        let Some((question, gold_answer, category)) = gold.get(problem_id) else {
            skipped_no_gold += attempts.len();
            continue;
        };
        let mut attempt_verdicts = Vec::new();
        let mut finals = Vec::new();
        let mut responses = Vec::new();
        for outcome in attempts {
            let response = &outcome.final_candidate.text;
            let verdict = judging::auto_judge(
                provider.as_dyn(),
                &catalog,
                question,
                response,
                gold_answer,
                &params,
                &mut log,
            )?;
            serde_json::to_writer(
                &mut verdict_file,
                &VerdictRecord {
                    problem_id: problem_id.clone(),
                    attempt: outcome.attempt,
                    extracted_final_answer: verdict.extracted_final_answer.clone(),
                    correct: verdict.correct,
                    confidence: verdict.confidence,
                    reasoning: verdict.reasoning.clone(),
                },
            )
            .map_err(|e| CliError::Internal(e.to_string()))?;
            verdict_file
                .write_all(b"\n")
                .map_err(|e| CliError::Internal(e.to_string()))?;
            attempt_verdicts.push(verdict.correct);
            finals.push(outcome.final_candidate.final_answer.clone());
            responses.push(response.clone());
        }

        let accuracy_scores = judging::score_accuracy(
            provider.as_dyn(),
            &catalog,
            question,
            gold_answer,
            "",
            &finals[..finals.len().min(5)],
            &responses[..responses.len().min(5)],
            &params,
            &mut log,
            &mut warnings,
        )?;
        let mean_accuracy =
            accuracy_scores.iter().sum::<f64>() / accuracy_scores.len() as f64;
        let mean_consistency = judging::pairwise_consistency(
            provider.as_dyn(),
            &catalog,
            &responses[..responses.len().min(5)],
            &params,
            &mut log,
        )?;

        let pass1 = attempt_verdicts.first().copied().unwrap_or(false) as u8;
        let pass5 = if attempt_verdicts.len() >= 5 {
            attempt_verdicts[..5].iter().any(|&v| v).to_string()
        } else {
            String::new()
        };
        summary_rows.push(format!(
            "{problem_id},{pass1},{pass5},{mean_accuracy:.4},{mean_consistency:.4}"
        ));
        if let Some(category) = category {
            category_points
                .entry(category.clone())
                .or_default()
                .push((mean_consistency, mean_accuracy));
        }
        verdict_matrix.insert(problem_id.clone(), attempt_verdicts);
    }

    if verdict_matrix.is_empty() {
        return Err(CliError::Config(
            "no judgeable problems (no gold answers matched the results)".into(),
        ));
    }

    let mut summary = String::from("problem_id,pass1,pass5,mean_accuracy,mean_consistency\n");
    for row in &summary_rows {
        summary.push_str(row);
        summary.push('\n');
    }
    std::fs::write(&summary_path, summary).map_err(|e| CliError::Internal(e.to_string()))?;

    let pass1 = judging::pass_at_k(&verdict_matrix, 1)?;
    let min_attempts = verdict_matrix.values().map(Vec::len).min().unwrap_or(0);
    let pass5 = if min_attempts >= 5 {
        Some(judging::pass_at_k(&verdict_matrix, 5)?)
    } else {
        None
    };
    let mut slopes = serde_json::Map::new();
    for (category, points) in &category_points {
        if let Ok((slope, _)) = judging::fit_slope(points) {
            slopes.insert(category.clone(), serde_json::json!(slope));
        }
    }
    println!(
        "{}",
        serde_json::json!({
            "problems": verdict_matrix.len(),
            "pass1": pass1,
            "pass5": pass5,
            "skipped_no_gold": skipped_no_gold,
            "consistency_accuracy_slopes": slopes,
            "verdicts": verdicts_path,
            "summary": summary_path,
        })
    );
    Ok(())
}

/// Recursively collect all results.jsonl files under a directory.
fn find_results_files(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Internal(e.to_string()))?;
        let path = entry.path();
        if path.is_dir() {
            find_results_files(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "results.jsonl") {
            found.push(path);
        }
    }
    Ok(())
}

pub fn report(results_dir: PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let mut files = Vec::new();
    find_results_files(&results_dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no results.jsonl under {}",
            results_dir.display()
        )));
    }
    let mut outcomes = Vec::new();
    for file in &files {
        outcomes.extend(artifacts::read_results(file)?);
    }
    let rows = reporting::rows_from_outcomes(&outcomes)?;
    let csv = reporting::to_csv(&rows);
    let out_path = out.unwrap_or_else(|| results_dir.join("report.csv"));
    std::fs::write(&out_path, csv).map_err(|e| CliError::Internal(e.to_string()))?;
    println!(
        "{}",
        serde_json::json!({
            "runs": files.len(),
            "outcomes": outcomes.len(),
            "rows": rows.len(),
            "report": out_path,
        })
    );
    Ok(())
}
