//! `curekit` command-line tool.
//!
//! Exit codes: 0 success, 1 domain error (parse, validation, I/O), 2 usage
//! error.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use curekit::evalkit::ParseMode;
use curekit::ingest::InputFormat;

#[derive(Debug, Parser)]
#[command(name = "curekit", version, about = "Curriculum, task generation and evaluation toolkit for grounded radiology tasks")]
pub struct Cli {
    /// Seed for stochastic subcommands; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config document with a `version` field.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path; stdout when omitted (no manifest is written then).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = LogFormat::Text)]
    pub log: LogFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Strict,
    Lenient,
}

impl From<Mode> for ParseMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Strict => ParseMode::Strict,
            Mode::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw annotation export into record JSONL.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// scene-graph, phrase-boxes, grounded-report, detection or records.
        #[arg(long, value_parser = |s: &str| s.parse::<InputFormat>())]
        format: InputFormat,
        #[arg(long)]
        dataset: String,
        /// Skip malformed rows instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Render records into instruction/response triplets.
    GenTasks {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Expand detection records into PG and GRG records first.
        #[arg(long)]
        expand_padchest: bool,
    },
    /// Apply box-aware augmentation to triplets.
    Augment {
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Emit the drawn parameters alongside each instance.
        #[arg(long)]
        trace: bool,
    },
    /// Compute the next stage's sampling distributions.
    Plan {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Current state; the uniform warm-up state when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Per-source metrics JSONL; without it the state is returned as is.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Draw training records from a sampling state.
    Sample {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Run the full stage loop against a simulated or remote learner.
    Simulate {
        #[arg(long)]
        records: Option<PathBuf>,
        /// Validation records; the training records when omitted.
        #[arg(long)]
        val: Option<PathBuf>,
        /// Simulated learner parameters (JSON).
        #[arg(long, conflicts_with = "learner_url")]
        learner: Option<PathBuf>,
        /// Base URL of a remote learner exposing /train and /evaluate.
        #[arg(long)]
        learner_url: Option<String>,
        #[arg(long, default_value_t = 60_000)]
        learner_timeout_ms: u64,
    },
    /// Score predictions against gold records.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// PG, GRG, AGRG_LOCATE, AGRG_DESCRIBE, AGRG_BOTH or DETECTION.
        #[arg(long)]
        task: String,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Judge generated descriptions against reference reports.
    Judge {
        #[arg(long)]
        pred: PathBuf,
        /// JSONL rows `{id, anatomy, report}`.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Lowercase enum values before validation.
        #[arg(long)]
        lenient: bool,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Per-anatomy rates and the mean row from verdict JSONL.
    JudgeAggregate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Evaluation preprocessing (CLAHE, resize) of an intensity grid.
    Preprocess {
        /// JSON `{width, height, max_level, values}`.
        #[arg(long)]
        image: PathBuf,
    },
}

fn init_logging(format: LogFormat) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if format == LogFormat::Json {
        b.format(|buf, r| {
            let line = serde_json::json!({
                "level": r.level().as_str(),
                "target": r.target(),
                "message": r.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    b.target(env_logger::Target::Stderr).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.log);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `curekit --help` for usage.");
            ExitCode::from(2)
        }
        Err(commands::CliError::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
