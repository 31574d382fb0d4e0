use std::path::PathBuf;

use clap::Args;
use retkit_core::corpus::read_run;
use retkit_core::filtering::{filter_instances, PriorityWeights};
use retkit_core::mining::{read_instances, write_instances};

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct FilterArgs {
    /// Mined instances (JSON-lines)
    #[arg(long)]
    instances: PathBuf,

    /// First-stage run used as the recoverability oracle
    #[arg(long)]
    run: PathBuf,

    /// Keep positives recovered at rank <= this bound
    #[arg(long, default_value_t = 100)]
    top_rank: usize,

    /// Keep only the N highest-priority instances
    #[arg(long)]
    select: Option<usize>,

    /// Priority weights `w_rank,w_margin,w_pool` (must sum to 1)
    #[arg(long, default_value = "0.4,0.4,0.2")]
    weights: String,

    /// Negative-pool size at which the pool term saturates
    #[arg(long, default_value_t = 20)]
    pool_cap: usize,

    /// Output instances (JSON-lines)
    #[arg(long)]
    out: PathBuf,

    /// Filter manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_weights(spec: &str, top_rank: usize, pool_cap: usize) -> Result<PriorityWeights, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::usage(format!(
            "--weights expects `w_rank,w_margin,w_pool`, got `{spec}`"
        )));
    }
    let parse = |s: &str| -> Result<f64, CliError> {
        s.trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad weight `{s}`")))
    };
    let weights = PriorityWeights {
        w_rank: parse(parts[0])?,
        w_margin: parse(parts[1])?,
        w_pool: parse(parts[2])?,
        top_rank,
        pool_cap,
    };
    weights
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(weights)
}

pub fn run(args: FilterArgs) -> CliResult {
    let weights = parse_weights(&args.weights, args.top_rank, args.pool_cap)?;
    let instances = read_instances(&args.instances)?;
    let run = read_run(&args.run)?;
    let (kept, manifest) = filter_instances(instances, &run, &weights, args.select)?;
    write_instances(&kept, &args.out)?;
    let file = std::fs::File::create(&args.manifest)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot write {}: {e}", args.manifest.display())))?;
    serde_json::to_writer_pretty(file, &manifest)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot encode manifest: {e}")))?;
    println!(
        "kept {} of {} instances (recovered {}, dropped {} missing-query, {} beyond rank {})",
        manifest.selected,
        manifest.input_count,
        manifest.recovered,
        manifest.dropped_missing_query,
        manifest.dropped_beyond_top_rank,
        args.top_rank
    );
    Ok(())
}
