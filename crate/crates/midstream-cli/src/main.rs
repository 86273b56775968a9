//! Operator CLI: run scripted or live batches, filter and index corpora,
//! judge result files, and emit the cost report.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Exit codes: 0 ok, 2 usage/config, 3 provider, 4 internal.
pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_PROVIDER: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "midstream", version, about = "Agent-workflow engine with in-stream retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of problems through the workflow.
    Run {
        /// Problems file (JSONL: {"id", "question", "answer"?, "choices"?, "category"?}).
        #[arg(long)]
        problems: PathBuf,
        /// Flat key=value config file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the config file's mode (none|explicit|monitor).
        #[arg(long)]
        mode: Option<String>,
        /// Output directory for results.jsonl, events.jsonl, calls.jsonl, manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Independent attempts per problem.
        #[arg(long, default_value_t = 1)]
        attempts: usize,
        /// Replay script (JSONL). Without it the HTTP provider is used.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Corpus to index for local retrieval (JSONL documents).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Prebuilt index artifact (overrides --corpus).
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Corpus tooling.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Judge a results file against gold answers with a scripted or live grader.
    Judge {
        /// Results file produced by `run`.
        #[arg(long)]
        results: PathBuf,
        /// Problems file carrying gold answers.
        #[arg(long)]
        problems: PathBuf,
        /// Replay script for the grader.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Output directory for verdicts.jsonl and summary.csv.
        #[arg(long)]
        out: PathBuf,
        /// Config file (model/endpoint settings for a live grader).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate run directories into report.csv.
    Report {
        /// Directory containing one or more run output directories.
        #[arg(long)]
        results_dir: PathBuf,
        /// Where to write report.csv (defaults inside results_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Apply the two-threshold semantic keyword filter.
    Filter {
        /// Corpus JSONL: {"id", "title", "body"}.
        #[arg(long)]
        corpus: PathBuf,
        /// Keyword profile JSON: {"positive": [...], "negative": [...]}.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Output path for kept documents (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Positive-similarity lower bound.
        #[arg(long, default_value_t = 0.2)]
        positive_min: f64,
        /// Negative-similarity upper bound.
        #[arg(long, default_value_t = 0.1)]
        negative_max: f64,
    },
    /// Build the versioned retrieval index artifact.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Chunk size in characters.
        #[arg(long, default_value_t = 512)]
        chunk: usize,
    },
    /// Render the summarization prompt per document and store responses.
    Summarize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replay script for the summarizer.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            problems,
            config,
            mode,
            out,
            attempts,
            script,
            corpus,
            index,
        } => commands::run(commands::RunArgs {
            problems,
            config,
            mode,
            out,
            attempts,
            script,
            corpus,
            index,
        }),
        Command::Corpus { command } => match command {
            CorpusCommand::Filter {
                corpus,
                profile,
                out,
                positive_min,
                negative_max,
            } => commands::corpus_filter(corpus, profile, out, positive_min, negative_max),
            CorpusCommand::Index { corpus, out, chunk } => {
                commands::corpus_index(corpus, out, chunk)
            }
            CorpusCommand::Summarize {
                corpus,
                out,
                script,
                config,
            } => commands::corpus_summarize(corpus, out, script, config),
        },
        Command::Judge {
            results,
            problems,
            script,
            out,
            config,
        } => commands::judge(results, problems, script, out, config),
        Command::Report { results_dir, out } => commands::report(results_dir, out),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(err) => {
            let (code, label) = err.exit_code();
            eprintln!("{}", serde_json::json!({ "error": err.to_string(), "kind": label }));
            ExitCode::from(code)
        }
    }
}
