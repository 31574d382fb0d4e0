use std::path::PathBuf;

use clap::Args;
use retkit_core::leaderboard::{render_markdown, render_tsv, run_suite, CellGrid, SuiteManifest};
use retkit_core::metrics::{Gain, MetricSpec};

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct SuiteArgs {
    /// Suite manifest (JSON): datasets, per-model runs, subsets
    #[arg(long)]
    manifest: PathBuf,

    /// Metric cutoff
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// NDCG gain: linear or exp
    #[arg(long, default_value = "linear")]
    gain: String,

    /// Score missing runs as 0 instead of failing
    #[arg(long)]
    allow_missing: bool,

    /// Output directory for leaderboard.{tsv,md,json}
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
pub struct LeaderboardArgs {
    /// Precomputed cell grid (JSON, same layout eval-suite writes)
    #[arg(long)]
    cells: PathBuf,

    /// Metric cutoff used in column labels
    #[arg(long, default_value_t = 10)]
    k: usize,

    /// Output directory for leaderboard.{tsv,md}
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn run_eval_suite(args: SuiteArgs) -> CliResult {
    if args.k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let gain: Gain = args.gain.parse().map_err(CliError::Usage)?;
    let manifest = SuiteManifest::load(&args.manifest)?;
    let spec = MetricSpec {
        k: args.k,
        gain,
        ..Default::default()
    };
    // missing runs always render as marked, zero-scored cells; the flag
    // only decides whether they fail the command
    let grid = run_suite(&manifest, &spec, true)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot create {}: {e}", args.out_dir.display())))?;
    grid.save(&args.out_dir.join("leaderboard.json"))?;
    write_tables(&grid, args.k, &args.out_dir)?;
    if grid.has_missing() && !args.allow_missing {
        let pairs: Vec<String> = grid
            .missing
            .iter()
            .flat_map(|(model, datasets)| {
                datasets.iter().map(move |d| format!("{model}/{d}"))
            })
            .collect();
        return Err(CliError::Data(anyhow::anyhow!(
            "missing runs for {} (rerun with --allow-missing to accept zero-scored cells)",
            pairs.join(", ")
        )));
    }
    Ok(())
}

pub fn run_leaderboard(args: LeaderboardArgs) -> CliResult {
    if args.k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let grid = CellGrid::load(&args.cells)?;
    if let Some(out_dir) = &args.out_dir {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(anyhow::anyhow!("cannot create {}: {e}", out_dir.display())))?;
        write_tables(&grid, args.k, out_dir)?;
    } else {
        print!("{}", render_tsv(&grid, args.k)?);
    }
    Ok(())
}

fn write_tables(grid: &CellGrid, k: usize, out_dir: &std::path::Path) -> CliResult {
    let tsv = render_tsv(grid, k)?;
    let markdown = render_markdown(grid, k)?;
    let write = |name: &str, body: &str| -> CliResult {
        let path = out_dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| CliError::Data(anyhow::anyhow!("cannot write {}: {e}", path.display())))
    };
    write("leaderboard.tsv", &tsv)?;
    write("leaderboard.md", &markdown)?;
    print!("{tsv}");
    Ok(())
}
