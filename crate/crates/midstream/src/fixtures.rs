//! Deterministic scripted fixtures for offline pipeline testing.
//!
//! Each fixture hand-assembles a full replay script — every provider
//! response the pipeline will ask for, keyed by the exact messages the
//! stages send — together with the transcript and counters the run is
//! expected to produce. The monitored-generation fixtures simulate the
//! window scheduler step by step, so the expected stream doubles as an
//! independently assembled oracle for the engine's own output.

use crate::monitor::{injection_sentence, prompts as mon_prompts};
use crate::orchestrator::derive_seed;
use crate::provider::{roles, Message, ScriptBuilder, ScriptEntry, TemplateCatalog};
use crate::retrieval::{Document, LexicalIndex, Retriever};
use crate::stages::prompts;
use crate::types::{Mode, Problem, WorkflowConfig};

/// A complete offline scenario: inputs, script, and expected outcomes.
pub struct Fixture {
    pub problem: Problem,
    pub config: WorkflowConfig,
    pub corpus: Vec<Document>,
    pub entries: Vec<ScriptEntry>,
    pub expect: Expectations,
}

/// What a fixture run must produce.
#[derive(Debug, Clone, Default)]
pub struct Expectations {
    /// Final monitored stream of proposer slot 0, when monitored.
    pub p0_stream: Option<String>,
    pub injections: u64,
    pub suppressed_budget: u64,
    pub monitor_probes: u64,
    pub agent_steps: u64,
    pub retrieval_calls: u64,
    /// Id of the candidate the ranker should select.
    pub winner_id: String,
}

/// On-disk fixture file locations from [`Fixture::write_files`].
pub struct FixturePaths {
    pub problems: std::path::PathBuf,
    pub corpus: std::path::PathBuf,
    pub script: std::path::PathBuf,
}

impl Fixture {
    pub fn index(&self) -> LexicalIndex {
        LexicalIndex::build(&self.corpus, self.config.rag_chunk).expect("fixture corpus indexes")
    }

    pub fn provider(&self) -> crate::provider::ScriptedProvider {
        crate::provider::ScriptedProvider::from_entries(self.entries.clone())
            .expect("fixture script is well-formed")
    }

    /// Flat key=value view of the fixture config, in the CLI's file format.
    pub fn config_toml(&self) -> String {
        flat_config_toml(&self.config)
    }

    /// Write problems.jsonl, corpus.jsonl, and script.jsonl into a directory.
    pub fn write_files(&self, dir: &std::path::Path) -> std::io::Result<FixturePaths> {
        std::fs::create_dir_all(dir)?;
        let paths = FixturePaths {
            problems: dir.join("problems.jsonl"),
            corpus: dir.join("corpus.jsonl"),
            script: dir.join("script.jsonl"),
        };
        let mut line = serde_json::to_string(&self.problem).expect("problem serializes");
        line.push('\n');
        std::fs::write(&paths.problems, line)?;
        let mut corpus = String::new();
        for doc in &self.corpus {
            corpus.push_str(&serde_json::to_string(doc).expect("document serializes"));
            corpus.push('\n');
        }
        std::fs::write(&paths.corpus, corpus)?;
        let mut script = String::new();
        for entry in &self.entries {
            script.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            script.push('\n');
        }
        std::fs::write(&paths.script, script)?;
        Ok(paths)
    }
}

/// Rough token estimate used for declared script token counts.
fn toks(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Render a config as the flat key=value document the CLI consumes.
pub fn flat_config_toml(config: &WorkflowConfig) -> String {
    let ranker = match config.ranker {
        crate::types::RankerKind::Llm => "llm",
        crate::types::RankerKind::Composite => "composite",
    };
    format!(
        "model = \"{}\"\nquery_top_k = {}\nrag_chunk = {}\nrag_overlapping = {}\n\
         max_rag = {}\ntemperature = {}\nmax_tokens = {}\nk_proposers = {}\ntau = {}\n\
         t_max = {}\nmode = \"{}\"\nseed = {}\nranker = \"{ranker}\"\n",
        config.model,
        config.query_top_k,
        config.rag_chunk,
        config.rag_overlapping,
        config.max_rag,
        config.temperature,
        config.max_tokens,
        config.k_proposers,
        config.tau,
        config.t_max,
        config.mode.as_str(),
        config.seed,
    )
}

fn fixture_corpus() -> Vec<Document> {
    vec![
        Document::new(
            "watterson-1975",
            "Estimating theta from segregating sites",
            "The watterson estimator relates the number of segregating sites to theta, \
             and for a diploid population theta equals four Ne mu, linking diversity to \
             the effective population size.",
        ),
        Document::new(
            "popgen-survey",
            "Effective population size in equilibrium models",
            "Under neutrality the effective population size follows from theta and the \
             mutation rate; the watterson framework divides segregating sites by the \
             harmonic number of the sample size.",
        ),
        Document::new(
            "offtopic-bread",
            "Sourdough basics",
            "A reliable bread dough needs patience flour water salt and plenty of time.",
        ),
    ]
}

fn fixture_problem() -> Problem {
    Problem {
        id: "popgen-001".to_string(),
        question: "A sample of 10 sequences shows 14 segregating sites and the per-site \
                   mutation rate is known. Estimate the effective population size implied \
                   by the Watterson estimate of theta."
            .to_string(),
        gold_answer: Some("12500".to_string()),
        choices: None,
        category: Some("retrieval".to_string()),
    }
}

/// Sentence repeated and cut to an exact character length.
fn filler(sentence: &str, chars: usize) -> String {
    let mut out = String::new();
    while out.chars().count() < chars {
        out.push_str(sentence);
    }
    out.chars().take(chars).collect()
}

/// Plan for one monitored generation to simulate.
struct MonitoredPlan<'a> {
    catalog: &'a TemplateCatalog,
    index: &'a LexicalIndex,
    config: &'a WorkflowConfig,
    base_messages: Vec<Message>,
    seed: u64,
    segments: Vec<String>,
    /// Whether the monitor answers yes for the n-th probed window.
    fires: Vec<bool>,
    /// One query per successful injection, in order.
    queries: Vec<String>,
    /// Evidence summary framed into each injection sentence.
    summaries: Vec<String>,
}

struct MonitoredSim {
    stream: String,
    probes: u64,
    injections: u64,
    suppressed_budget: u64,
}

/// Step-by-step simulation of monitored generation, emitting the script
/// entries the engine will look up and the stream it must produce. Mirrors
/// the engine's scheduling: full windows at stride offsets, injection
/// appends followed by a continuation, and one tail flush per final length.
fn simulate_monitored(plan: &MonitoredPlan, script: &mut ScriptBuilder) -> MonitoredSim {
    let chunk = plan.config.rag_chunk;
    let stride = chunk - plan.config.rag_overlapping;
    let top_k = plan.config.query_top_k;

    script.respond_segments(
        roles::PROPOSER,
        &plan.base_messages,
        Some(plan.seed),
        plan.segments.iter().map(|s| (s.clone(), toks(s))).collect(),
        64,
    );

    let fires = |ordinal: usize| plan.fires.get(ordinal).copied().unwrap_or(false);
    let mut stream: Vec<char> = Vec::new();
    let mut segments = plan.segments.iter();
    let mut pending = true;
    let mut scan = 0usize;
    let mut tail_probed: Option<usize> = None;
    let mut ordinal = 0usize;
    let mut sim = MonitoredSim {
        stream: String::new(),
        probes: 0,
        injections: 0,
        suppressed_budget: 0,
    };

    let inject = |window_text: &str,
                      stream: &mut Vec<char>,
                      sim: &mut MonitoredSim,
                      script: &mut ScriptBuilder|
     -> bool {
        if (sim.injections as usize) >= plan.config.max_rag {
            sim.suppressed_budget += 1;
            return false;
        }
        let query = plan.queries[sim.injections as usize].clone();
        let querier_msgs = mon_prompts::querier_messages(plan.catalog, window_text)
            .expect("querier prompt renders");
        script.respond(roles::QUERIER, &querier_msgs, query.clone(), toks(window_text), 8);
        let evidence = plan
            .index
            .search_top_k(&query, top_k)
            .expect("fixture query is valid");
        assert!(
            !evidence.snippets.is_empty(),
            "fixture query {query:?} must hit the corpus"
        );
        let context: String = stream.iter().collect();
        let injection = injection_sentence(&query, &plan.summaries[sim.injections as usize]);
        let injector_msgs = mon_prompts::injector_messages(plan.catalog, &context, &query, &evidence)
            .expect("injector prompt renders");
        script.respond(
            roles::INJECTOR,
            &injector_msgs,
            injection.clone(),
            toks(&context),
            toks(&injection),
        );
        stream.extend(injection.chars());
        sim.injections += 1;
        true
    };

    loop {
        if pending {
            pending = false;
            if let Some(segment) = segments.next() {
                stream.extend(segment.chars());
            }
        }
        let mut continued = false;
        while scan + chunk <= stream.len() {
            let window_text: String = stream[scan..scan + chunk].iter().collect();
            scan += stride;
            sim.probes += 1;
            let fire = fires(ordinal);
            ordinal += 1;
            let monitor_msgs = mon_prompts::monitor_messages(plan.catalog, &window_text)
                .expect("monitor prompt renders");
            script.respond(
                roles::MONITOR,
                &monitor_msgs,
                if fire { "yes" } else { "no" },
                toks(&window_text),
                1,
            );
            if fire && inject(&window_text, &mut stream, &mut sim, script) {
                pending = true;
                continued = true;
                break;
            }
        }
        if continued {
            continue;
        }
        let covered = if scan == 0 { 0 } else { scan - stride + chunk };
        if stream.len() > covered && tail_probed != Some(stream.len()) {
            tail_probed = Some(stream.len());
            let window_text: String = stream[scan..].iter().collect();
            sim.probes += 1;
            let fire = fires(ordinal);
            ordinal += 1;
            let monitor_msgs = mon_prompts::monitor_messages(plan.catalog, &window_text)
                .expect("monitor prompt renders");
            script.respond(
                roles::MONITOR,
                &monitor_msgs,
                if fire { "yes" } else { "no" },
                toks(&window_text),
                1,
            );
            if fire && inject(&window_text, &mut stream, &mut sim, script) {
                pending = true;
                continue;
            }
        }
        break;
    }

    sim.stream = stream.iter().collect();
    sim
}

/// Script the non-monitored tail of the pipeline: correction pass,
/// refinement rotation, quality loop, and ranker. `failing_slot` marks the
/// one candidate that fails quality round 0 and passes after revision.
#[allow(clippy::too_many_arguments)]
fn script_pipeline_tail(
    script: &mut ScriptBuilder,
    catalog: &TemplateCatalog,
    problem: &Problem,
    proposed_texts: &[String],
    failing_slot: Option<usize>,
    ranker_reply: &str,
) -> u64 {
    let k = proposed_texts.len();
    let mut steps = 0u64;

    // Correction pass.
    let corrected: Vec<String> = (0..k)
        .map(|i| {
            format!(
                "Corrected solution {i}: the Watterson relation gives Ne near 12500. \
                 <answer>\\boxed{{1250{i}}}</answer>"
            )
        })
        .collect();
    for (i, text) in proposed_texts.iter().enumerate() {
        let msgs = prompts::corrector_messages(catalog, problem, text, None)
            .expect("corrector prompt renders");
        script.respond(roles::CORRECTOR, &msgs, corrected[i].clone(), toks(text), toks(&corrected[i]));
        steps += 1;
    }

    // Refinement rotation (skipped entirely for a single candidate).
    let refined: Vec<String> = if k == 1 {
        corrected.clone()
    } else {
        let refined: Vec<String> = (0..k)
            .map(|i| {
                format!(
                    "Refined solution {i}: cross-checked against the peers; the estimate \
                     stands. <answer>\\boxed{{1250{i}}}</answer>"
                )
            })
            .collect();
        for i in 0..k {
            let references: Vec<&str> = (0..k)
                .filter(|&j| j != i)
                .map(|j| corrected[j].as_str())
                .collect();
            let msgs = prompts::refinement_messages(catalog, problem, &corrected[i], &references)
                .expect("refinement prompt renders");
            script.respond(roles::REFINER, &msgs, refined[i].clone(), 256, toks(&refined[i]));
            steps += 1;
        }
        refined
    };

    // Quality round 0: one optional failure, everyone else passes.
    let suggestion = "Recheck the harmonic-number division in step 2.";
    for (i, text) in refined.iter().enumerate() {
        let reply = if failing_slot == Some(i) {
            format!(
                "{{\"quality_scores\": [3.0, 2.0, 3.0], \"suggestion\": \"{suggestion}\"}}"
            )
        } else {
            "{\"quality_scores\": [5.0, 4.0, 5.0], \"suggestion\": \"Keep the derivation as is.\"}"
                .to_string()
        };
        let msgs = prompts::evaluator_messages(catalog, problem, text)
            .expect("evaluator prompt renders");
        script.respond(roles::EVALUATOR, &msgs, reply, toks(text), 24);
        steps += 1;
    }

    // Revision and re-evaluation for the failing slot.
    let mut finalists: Vec<String> = refined.clone();
    if let Some(slot) = failing_slot {
        let revised = format!(
            "Revised solution {slot}: harmonic division corrected. \
             <answer>\\boxed{{1250{slot}}}</answer>"
        );
        let msgs =
            prompts::corrector_messages(catalog, problem, &refined[slot], Some(suggestion))
                .expect("corrector prompt renders");
        script.respond(roles::CORRECTOR, &msgs, revised.clone(), toks(&refined[slot]), toks(&revised));
        steps += 1;
        let msgs = prompts::evaluator_messages(catalog, problem, &revised)
            .expect("evaluator prompt renders");
        script.respond(
            roles::EVALUATOR,
            &msgs,
            "{\"quality_scores\": [4.0, 4.0, 4.0], \"suggestion\": \"Good.\"}",
            toks(&revised),
            20,
        );
        steps += 1;
        finalists[slot] = revised;
    }

    // Ranker (only consulted when more than one candidate survives).
    if k > 1 {
        let texts: Vec<&str> = finalists.iter().map(String::as_str).collect();
        let msgs = prompts::ranker_messages(catalog, problem, &texts)
            .expect("ranker prompt renders");
        script.respond(roles::RANKER, &msgs, ranker_reply, 128, 1);
        steps += 1;
    }
    steps
}

/// The golden scenario: five proposers in monitor mode, two evidence
/// injections on slot 0, one quality failure revised once, LLM ranker.
pub fn golden() -> Fixture {
    let problem = fixture_problem();
    let config = WorkflowConfig {
        mode: Mode::Monitor,
        seed: 17,
        ..WorkflowConfig::default()
    };
    let corpus = fixture_corpus();
    let index = LexicalIndex::build(&corpus, config.rag_chunk).unwrap();
    let catalog = TemplateCatalog::builtin();
    let run_seed = derive_seed(config.seed, &[&problem.id, "0"]);

    let mut script = ScriptBuilder::new();
    let base_messages = prompts::proposer_messages(&catalog, &problem).unwrap();

    // Slot 0: three segments with injections after the first two windows.
    let seg0 = filler(
        "To estimate the effective population size I recall that the watterson \
         estimator links segregating sites to theta, though the exact constant \
         needs care. ",
        600,
    );
    let seg1 = filler(
        "With the retrieved relation in hand I substitute the fourteen segregating \
         sites, divide by the harmonic number for ten sequences, and solve for Ne \
         in closed form. ",
        400,
    );
    let seg2 = "Rounding to the nearest whole organism gives the estimate. \
                <answer>\\boxed{12500}</answer>"
        .to_string();
    let plan = MonitoredPlan {
        catalog: &catalog,
        index: &index,
        config: &config,
        base_messages: base_messages.clone(),
        seed: derive_seed(run_seed, &["proposer", "0"]),
        segments: vec![seg0, seg1, seg2],
        fires: vec![true, true],
        queries: vec![
            "watterson estimator theta relation".to_string(),
            "effective population size mutation rate".to_string(),
        ],
        summaries: vec![
            "the watterson estimator theta equals four Ne mu".to_string(),
            "the effective population size follows from theta and the mutation rate".to_string(),
        ],
    };
    let sim = simulate_monitored(&plan, &mut script);
    assert_eq!(sim.injections, 2, "golden fixture is built for two injections");

    // Slots 1-4: short, unmonitored-looking answers (single tail probe each).
    let mut proposed_texts = vec![sim.stream.clone()];
    let mut extra_probes = 0;
    for slot in 1..config.k_proposers {
        let text = format!(
            "Proposer {slot} answer: applying the standard diversity relation directly \
             yields an effective population size estimate. <answer>\\boxed{{1250{slot}}}</answer>"
        );
        script.respond_seeded(
            roles::PROPOSER,
            &base_messages,
            derive_seed(run_seed, &["proposer", &slot.to_string()]),
            text.clone(),
            64,
            toks(&text),
        );
        let monitor_msgs = mon_prompts::monitor_messages(&catalog, &text).unwrap();
        script.respond(roles::MONITOR, &monitor_msgs, "no", toks(&text), 1);
        extra_probes += 1;
        proposed_texts.push(text);
    }

    let tail_steps = script_pipeline_tail(
        &mut script,
        &catalog,
        &problem,
        &proposed_texts,
        Some(2),
        "1",
    );

    Fixture {
        expect: Expectations {
            p0_stream: Some(sim.stream.clone()),
            injections: sim.injections,
            suppressed_budget: sim.suppressed_budget,
            monitor_probes: sim.probes + extra_probes,
            // Proposers + querier/injector pairs + the scripted tail.
            agent_steps: config.k_proposers as u64 + 2 * sim.injections + tail_steps,
            retrieval_calls: sim.injections,
            winner_id: "r1".to_string(),
        },
        problem,
        config,
        corpus,
        entries: script.entries().to_vec(),
    }
}

/// All-pass scenario in explicit mode: no monitoring, no tool calls, one
/// evaluator round, LLM ranker. Exactly 21 agent steps for five proposers.
pub fn happy() -> Fixture {
    happy_with_attempts(1)
}

/// The all-pass scenario scripted for several independent attempts. Each
/// attempt derives fresh proposer seeds; proposer texts repeat, so the
/// content-keyed downstream entries are shared across attempts.
pub fn happy_with_attempts(attempts: usize) -> Fixture {
    assert!(attempts >= 1);
    let problem = fixture_problem();
    let config = WorkflowConfig {
        mode: Mode::Explicit,
        seed: 5,
        ..WorkflowConfig::default()
    };
    let catalog = TemplateCatalog::builtin();
    let mut script = ScriptBuilder::new();
    let base_messages = prompts::proposer_messages(&catalog, &problem).unwrap();

    let proposed: Vec<String> = (0..config.k_proposers)
        .map(|slot| {
            format!(
                "Proposer {slot}: direct application of the estimator. \
                 <answer>\\boxed{{1250{slot}}}</answer>"
            )
        })
        .collect();
    for attempt in 0..attempts {
        let run_seed = derive_seed(config.seed, &[&problem.id, &attempt.to_string()]);
        for (slot, text) in proposed.iter().enumerate() {
            script.respond_seeded(
                roles::PROPOSER,
                &base_messages,
                derive_seed(run_seed, &["proposer", &slot.to_string()]),
                text.clone(),
                64,
                toks(text),
            );
        }
    }
    let tail_steps =
        script_pipeline_tail(&mut script, &catalog, &problem, &proposed, None, "3");

    Fixture {
        expect: Expectations {
            p0_stream: None,
            injections: 0,
            suppressed_budget: 0,
            monitor_probes: 0,
            agent_steps: config.k_proposers as u64 + tail_steps,
            retrieval_calls: 0,
            winner_id: "r3".to_string(),
        },
        problem,
        config,
        corpus: fixture_corpus(),
        entries: script.entries().to_vec(),
    }
}

/// No-external-knowledge scenario: two proposers, no retrieval anywhere.
pub fn none_mode() -> Fixture {
    let problem = fixture_problem();
    let config = WorkflowConfig {
        mode: Mode::None,
        seed: 11,
        k_proposers: 2,
        ..WorkflowConfig::default()
    };
    let catalog = TemplateCatalog::builtin();
    let run_seed = derive_seed(config.seed, &[&problem.id, "0"]);
    let mut script = ScriptBuilder::new();
    let base_messages = prompts::proposer_messages(&catalog, &problem).unwrap();

    let proposed: Vec<String> = (0..config.k_proposers)
        .map(|slot| {
            format!(
                "Unassisted answer {slot} from parametric memory alone. \
                 <answer>\\boxed{{1250{slot}}}</answer>"
            )
        })
        .collect();
    for (slot, text) in proposed.iter().enumerate() {
        script.respond_seeded(
            roles::PROPOSER,
            &base_messages,
            derive_seed(run_seed, &["proposer", &slot.to_string()]),
            text.clone(),
            64,
            toks(text),
        );
    }
    let tail_steps =
        script_pipeline_tail(&mut script, &catalog, &problem, &proposed, None, "0");

    Fixture {
        expect: Expectations {
            p0_stream: None,
            injections: 0,
            suppressed_budget: 0,
            monitor_probes: 0,
            agent_steps: config.k_proposers as u64 + tail_steps,
            retrieval_calls: 0,
            winner_id: "r0".to_string(),
        },
        problem,
        config,
        corpus: fixture_corpus(),
        entries: script.entries().to_vec(),
    }
}

/// Fault-injection scenario: five proposers in explicit mode, but the
/// script carries no entry for slot 4, so that proposal hard-fails and the
/// rest of the pipeline runs on the four survivors.
pub fn proposer_fault() -> Fixture {
    let problem = fixture_problem();
    let config = WorkflowConfig {
        mode: Mode::Explicit,
        seed: 23,
        ..WorkflowConfig::default()
    };
    let catalog = TemplateCatalog::builtin();
    let run_seed = derive_seed(config.seed, &[&problem.id, "0"]);
    let mut script = ScriptBuilder::new();
    let base_messages = prompts::proposer_messages(&catalog, &problem).unwrap();

    let surviving = config.k_proposers - 1;
    let proposed: Vec<String> = (0..surviving)
        .map(|slot| {
            format!(
                "Proposer {slot} under fault injection. <answer>\\boxed{{1250{slot}}}</answer>"
            )
        })
        .collect();
    for (slot, text) in proposed.iter().enumerate() {
        script.respond_seeded(
            roles::PROPOSER,
            &base_messages,
            derive_seed(run_seed, &["proposer", &slot.to_string()]),
            text.clone(),
            64,
            toks(text),
        );
    }
    let tail_steps =
        script_pipeline_tail(&mut script, &catalog, &problem, &proposed, None, "2");

    Fixture {
        expect: Expectations {
            p0_stream: None,
            injections: 0,
            suppressed_budget: 0,
            monitor_probes: 0,
            agent_steps: surviving as u64 + tail_steps,
            retrieval_calls: 0,
            winner_id: "r2".to_string(),
        },
        problem,
        config,
        corpus: fixture_corpus(),
        entries: script.entries().to_vec(),
    }
}

/// Single-proposer monitor-mode scenario where the monitor fires on the
/// first `fires` probed windows of a long generation. Injections stay
/// capped at `max_rag`; further fires are suppressed on budget.
pub fn monitored_burst(fires: usize) -> Fixture {
    assert!(fires <= 16, "burst fixture supports up to 16 fires");
    let problem = fixture_problem();
    let config = WorkflowConfig {
        mode: Mode::Monitor,
        seed: 29,
        k_proposers: 1,
        ..WorkflowConfig::default()
    };
    let corpus = fixture_corpus();
    let index = LexicalIndex::build(&corpus, config.rag_chunk).unwrap();
    let catalog = TemplateCatalog::builtin();
    let run_seed = derive_seed(config.seed, &[&problem.id, "0"]);
    let mut script = ScriptBuilder::new();
    let base_messages = prompts::proposer_messages(&catalog, &problem).unwrap();

    // Long single-segment generation: a dozen-plus windows.
    let body = filler(
        "The watterson estimator requires care with the harmonic normalization and \
         the ploidy constant, which I keep re-deriving from first principles. ",
        6200,
    );
    let text = format!("{body} <answer>\\boxed{{12500}}</answer>");
    let plan = MonitoredPlan {
        catalog: &catalog,
        index: &index,
        config: &config,
        base_messages,
        seed: derive_seed(run_seed, &["proposer", "0"]),
        segments: vec![text],
        fires: vec![true; fires],
        queries: vec![
            "watterson estimator harmonic normalization".to_string(),
            "watterson estimator ploidy constant".to_string(),
        ],
        summaries: vec![
            "the harmonic number of the sample size normalizes segregating sites".to_string(),
            "the diploid constant in the watterson relation is four".to_string(),
        ],
    };
    let sim = simulate_monitored(&plan, &mut script);
    assert!(
        sim.probes as usize >= fires.max(11),
        "burst generation must produce enough windows (got {})",
        sim.probes
    );

    let tail_steps = script_pipeline_tail(
        &mut script,
        &catalog,
        &problem,
        std::slice::from_ref(&sim.stream),
        None,
        "0",
    );

    Fixture {
        expect: Expectations {
            p0_stream: Some(sim.stream.clone()),
            injections: sim.injections,
            suppressed_budget: sim.suppressed_budget,
            monitor_probes: sim.probes,
            agent_steps: 1 + 2 * sim.injections + tail_steps,
            retrieval_calls: sim.injections,
            winner_id: "c0".to_string(),
        },
        problem,
        config,
        corpus,
        entries: script.entries().to_vec(),
    }
}
