//! One binary wiring the whole pipeline:
//! index -> search -> mine -> filter -> mix -> toy-train -> eval ->
//! leaderboard.
//!
//! Exit codes are a stable contract for scripting:
//! 0 success, 1 usage error, 2 data or validation error.

mod commands;

use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "retkit", version, about = "Retrieval experiment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for the stochastic stages (mix, toy-train)
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads for search and evaluation (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Suppress warnings
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build and persist a BM25 index
    Index {
        #[command(subcommand)]
        action: commands::index::IndexAction,
    },
    /// First-stage retrieval into a TREC run file
    Search {
        #[command(subcommand)]
        backend: commands::search::SearchBackend,
    },
    /// Mine hard negatives from a first-stage run
    Mine(commands::mine::MineArgs),
    /// Recoverability filter and priority selection over instances
    Filter(commands::filter::FilterArgs),
    /// Combine tagged sources into a shuffled, deduplicated mixture
    Mix(commands::mix::MixArgs),
    /// Train the toy contrastive encoder
    ToyTrain(commands::train::TrainArgs),
    /// Score one run against qrels
    Eval(commands::evaluate::EvalArgs),
    /// Evaluate a whole suite manifest into leaderboard tables
    EvalSuite(commands::suite::SuiteArgs),
    /// Render leaderboard tables from precomputed cells
    Leaderboard(commands::suite::LeaderboardArgs),
}

/// Usage errors exit 1; data and validation errors exit 2.
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<retkit_core::Error> for CliError {
    fn from(e: retkit_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult = Result<(), CliError>;

static QUIET: AtomicBool = AtomicBool::new(false);

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Warn && !QUIET.load(Ordering::Relaxed)
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().to_string().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    QUIET.store(cli.quiet, Ordering::Relaxed);
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(log::LevelFilter::Warn);
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let outcome = match cli.command {
        Command::Index { action } => commands::index::run(action),
        Command::Search { backend } => commands::search::run(backend),
        Command::Mine(args) => commands::mine::run(args),
        Command::Filter(args) => commands::filter::run(args),
        Command::Mix(args) => commands::mix::run(args, cli.seed),
        Command::ToyTrain(args) => commands::train::run(args, cli.seed),
        Command::Eval(args) => commands::evaluate::run(args),
        Command::EvalSuite(args) => commands::suite::run_eval_suite(args),
        Command::Leaderboard(args) => commands::suite::run_leaderboard(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
