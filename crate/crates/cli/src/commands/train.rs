use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use retkit_core::corpus::{load_corpus, load_qrels, load_queries};
use retkit_core::mining::read_instances;
use retkit_core::trainer::{train, OptimizerKind, TrainConfig, TrainEvalSet};

use super::write_json_report;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct TrainArgs {
    /// Training instances (JSON-lines, e.g. a built mixture)
    #[arg(long)]
    data: PathBuf,

    /// Embedding dimension
    #[arg(long, default_value_t = 64)]
    dim: usize,

    /// InfoNCE temperature
    #[arg(long, default_value_t = 0.05)]
    temp: f64,

    /// Batch size (in-batch negatives come from the same batch)
    #[arg(long, default_value_t = 16)]
    batch: usize,

    #[arg(long, default_value_t = 20)]
    epochs: usize,

    #[arg(long, default_value_t = 1e-3)]
    lr: f64,

    /// Optimizer: sgd or adam
    #[arg(long, default_value = "adam")]
    optimizer: String,

    /// Explicit hard negatives used per instance
    #[arg(long, default_value_t = 4)]
    hard_negatives: usize,

    /// Encoder output (binary)
    #[arg(long)]
    out: PathBuf,

    /// Per-epoch history (TSV)
    #[arg(long)]
    history: PathBuf,

    /// Qrels for the per-epoch MRR@10 hook
    #[arg(long)]
    eval_qrels: Option<PathBuf>,

    /// Corpus for the hook
    #[arg(long)]
    eval_corpus: Option<PathBuf>,

    /// Query texts for the hook
    #[arg(long)]
    eval_queries: Option<PathBuf>,
}

pub fn run(args: TrainArgs, seed: u64) -> CliResult {
    let optimizer: OptimizerKind = args.optimizer.parse().map_err(CliError::Usage)?;
    let config = TrainConfig {
        dim: args.dim,
        temperature: args.temp,
        batch_size: args.batch,
        learning_rate: args.lr,
        epochs: args.epochs,
        seed,
        optimizer,
        hard_negatives_per_instance: args.hard_negatives,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;

    let eval = match (&args.eval_qrels, &args.eval_corpus, &args.eval_queries) {
        (None, None, None) => None,
        (Some(qrels), Some(corpus), Some(queries)) => Some(TrainEvalSet {
            queries: load_queries(queries, retkit_core::FileFormat::detect(queries))?,
            corpus: load_corpus(corpus, retkit_core::FileFormat::detect(corpus))?,
            qrels: load_qrels(qrels)?,
        }),
        _ => {
            return Err(CliError::usage(
                "--eval-qrels, --eval-corpus, and --eval-queries must be given together",
            ))
        }
    };

    let instances = read_instances(&args.data)?;
    let outcome = train(&instances, &config, eval.as_ref())?;
    outcome.encoder.save(&args.out)?;

    let file = std::fs::File::create(&args.history)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot write {}: {e}", args.history.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| CliError::Data(anyhow::anyhow!("history write failed: {e}"));
    writeln!(w, "epoch\tmean_loss\tmrr_at_10").map_err(io_err)?;
    if let Some(mrr) = outcome.initial_mrr {
        writeln!(w, "0\tNA\t{mrr:.6}").map_err(io_err)?;
    }
    for epoch in &outcome.history {
        let mrr = epoch
            .eval_mrr
            .map(|m| format!("{m:.6}"))
            .unwrap_or_else(|| "NA".to_string());
        writeln!(w, "{}\t{:.6}\t{}", epoch.epoch, epoch.mean_loss, mrr).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;

    write_json_report(
        &super::report_path(&args.out),
        &serde_json::json!({
            "instances": instances.len(),
            "vocab": outcome.encoder.vocab_size(),
            "dim": config.dim,
            "temperature": config.temperature,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "epochs": config.epochs,
            "seed": config.seed,
            "optimizer": args.optimizer,
            "hard_negatives_per_instance": config.hard_negatives_per_instance,
            "initial_mrr_at_10": outcome.initial_mrr,
            "final_mrr_at_10": outcome.history.last().and_then(|e| e.eval_mrr),
            "final_mean_loss": outcome.history.last().map(|e| e.mean_loss),
        }),
    )?;
    println!(
        "trained {} epochs over {} instances (vocab {}, dim {}) -> {}",
        config.epochs,
        instances.len(),
        outcome.encoder.vocab_size(),
        config.dim,
        args.out.display()
    );
    Ok(())
}
