use std::path::PathBuf;

use clap::Args;
use retkit_core::corpus::{load_qrels, read_run};
use retkit_core::leaderboard::MetricKind;
use retkit_core::metrics::{evaluate_run, Gain, MapDenominator, MetricSpec};

use super::write_json_report;
use crate::{CliError, CliResult};

#[derive(Args)]
pub struct EvalArgs {
    /// TREC run to score
    #[arg(long)]
    run: PathBuf,

    /// TREC qrels
    #[arg(long)]
    qrels: PathBuf,

    /// Comma-separated `metric@k` list
    #[arg(long, default_value = "ndcg@10,mrr@10,map@10")]
    metrics: String,

    /// Also print one line per query
    #[arg(long)]
    per_query: bool,

    /// NDCG gain: linear or exp
    #[arg(long, default_value = "linear")]
    gain: String,

    /// Grade counted as relevant for MRR/MAP
    #[arg(long, default_value_t = 1)]
    rel_threshold: u32,

    /// MAP denominator: full (all relevant) or capped (min(R, k))
    #[arg(long, default_value = "full")]
    map_denominator: String,

    /// Optional machine-readable report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_metrics(spec: &str) -> Result<Vec<(MetricKind, usize)>, CliError> {
    let mut requested = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let (name, k) = part
            .split_once('@')
            .ok_or_else(|| CliError::usage(format!("expected `metric@k`, got `{part}`")))?;
        let kind: MetricKind = name.parse().map_err(CliError::Usage)?;
        let k: usize = k
            .parse()
            .map_err(|_| CliError::usage(format!("bad cutoff in `{part}`")))?;
        if k < 1 {
            return Err(CliError::usage(format!("cutoff must be >= 1 in `{part}`")));
        }
        requested.push((kind, k));
    }
    if requested.is_empty() {
        return Err(CliError::usage("--metrics must name at least one metric"));
    }
    Ok(requested)
}

pub fn run(args: EvalArgs) -> CliResult {
    let requested = parse_metrics(&args.metrics)?;
    let gain: Gain = args.gain.parse().map_err(CliError::Usage)?;
    let map_denominator: MapDenominator = args.map_denominator.parse().map_err(CliError::Usage)?;
    let run = read_run(&args.run)?;
    let qrels = load_qrels(&args.qrels)?;

    let mut cutoffs: Vec<usize> = requested.iter().map(|(_, k)| *k).collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let mut reports = std::collections::BTreeMap::new();
    for k in cutoffs {
        let spec = MetricSpec {
            k,
            gain,
            rel_threshold: args.rel_threshold,
            map_denominator,
        };
        reports.insert(k, evaluate_run(&run, &qrels, &spec)?);
    }

    let mut summary = serde_json::Map::new();
    for (kind, k) in &requested {
        let report = &reports[k];
        let value = kind.of(&report.mean);
        println!("{}\tall\t{value:.4}", kind.label(*k));
        summary.insert(kind.label(*k), serde_json::json!(value));
        if args.per_query {
            for (qid, triple) in &report.per_query {
                println!("{}\t{qid}\t{:.4}", kind.label(*k), kind.of(triple));
            }
        }
    }
    if let Some(report_path) = &args.report {
        let per_query: serde_json::Value = if args.per_query {
            let mut map = serde_json::Map::new();
            for (kind, k) in &requested {
                let report = &reports[k];
                map.insert(
                    kind.label(*k),
                    serde_json::json!(report
                        .per_query
                        .iter()
                        .map(|(q, t)| (q.clone(), kind.of(t)))
                        .collect::<std::collections::BTreeMap<_, _>>()),
                );
            }
            serde_json::Value::Object(map)
        } else {
            serde_json::Value::Null
        };
        write_json_report(
            report_path,
            &serde_json::json!({
                "run": args.run.display().to_string(),
                "qrels": args.qrels.display().to_string(),
                "queries": reports.values().next().map(|r| r.query_count),
                "gain": args.gain,
                "rel_threshold": args.rel_threshold,
                "map_denominator": args.map_denominator,
                "metrics": serde_json::Value::Object(summary),
                "per_query": per_query,
            }),
        )?;
    }
    Ok(())
}
