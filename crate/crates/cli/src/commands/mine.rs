use std::path::PathBuf;

use clap::Args;
use retkit_core::corpus::{load_corpus, load_qrels, load_queries, read_run};
use retkit_core::mining::{
    filter_short_queries, mine_run, write_instances, CutoffStrategy, MiningConfig,
};

use super::write_json_report;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct MineArgs {
    /// First-stage TREC run
    #[arg(long)]
    run: PathBuf,

    /// TREC qrels with the positives
    #[arg(long)]
    qrels: PathBuf,

    /// Query texts (JSON-lines or TSV); ids must match the run
    #[arg(long)]
    queries: PathBuf,

    /// Corpus supplying positive and negative texts
    #[arg(long)]
    corpus: PathBuf,

    /// Cutoff: mean, mean_plus_std:<alpha>, or top_fraction:<tau>
    #[arg(long, default_value = "mean")]
    cutoff: String,

    #[arg(long, default_value_t = 20)]
    max_neg: usize,

    #[arg(long, default_value_t = 1)]
    min_neg: usize,

    /// Run depth consumed as the candidate pool
    #[arg(long, default_value_t = 100)]
    depth: usize,

    /// Source tag stamped on every instance
    #[arg(long)]
    source: String,

    /// Output instances (JSON-lines)
    #[arg(long)]
    out: PathBuf,

    /// Mining report (JSON)
    #[arg(long)]
    report: PathBuf,

    /// Hygiene: drop queries with fewer tokens than this
    #[arg(long, default_value_t = 4)]
    min_query_tokens: usize,

    /// Skip the query-hygiene pass
    #[arg(long)]
    skip_hygiene: bool,

    /// Corpus format override (jsonl or tsv)
    #[arg(long)]
    corpus_format: Option<String>,

    /// Query format override (jsonl or tsv)
    #[arg(long)]
    query_format: Option<String>,
}

pub fn run(args: MineArgs) -> CliResult {
    let cutoff: CutoffStrategy = args.cutoff.parse().map_err(CliError::Usage)?;
    let config = MiningConfig {
        cutoff,
        max_negatives: args.max_neg,
        min_negatives: args.min_neg,
        candidate_depth: args.depth,
        min_query_tokens: args.min_query_tokens,
    };
    config.validate()?;

    let corpus_format = super::index::parse_format(args.corpus_format.as_deref(), &args.corpus)?;
    let query_format = super::index::parse_format(args.query_format.as_deref(), &args.queries)?;
    let corpus = load_corpus(&args.corpus, corpus_format)?;
    let queries = load_queries(&args.queries, query_format)?;
    let qrels = load_qrels(&args.qrels)?;
    let run = read_run(&args.run)?;

    let (instances, report) = mine_run(&queries, &run, &qrels, &corpus, &config, &args.source)?;
    let (instances, hygiene) = if args.skip_hygiene {
        (instances, None)
    } else {
        let (kept, _, hygiene) = filter_short_queries(instances, &config);
        (kept, Some(hygiene))
    };
    write_instances(&instances, &args.out)?;
    write_json_report(
        &args.report,
        &serde_json::json!({
            "config": config,
            "source": args.source,
            "mining": report,
            "hygiene": hygiene,
            "written": instances.len(),
        }),
    )?;
    println!(
        "mined {} instances from {} queries -> {}",
        instances.len(),
        report.queries_seen,
        args.out.display()
    );
    Ok(())
}
