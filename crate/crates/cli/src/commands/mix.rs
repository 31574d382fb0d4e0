use std::path::PathBuf;

use clap::Args;
use retkit_core::mixture::build_mixture_files;

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct MixArgs {
    /// Tagged source, `tag:path`, repeatable in mixture order
    #[arg(long = "source", required = true)]
    sources: Vec<String>,

    /// Shuffled mixture output (JSON-lines)
    #[arg(long)]
    out: PathBuf,

    /// Mixture manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
}

pub fn run(args: MixArgs, seed: u64) -> CliResult {
    let mut sources = Vec::with_capacity(args.sources.len());
    for spec in &args.sources {
        let (tag, path) = spec.split_once(':').ok_or_else(|| {
            CliError::usage(format!("--source expects `tag:path`, got `{spec}`"))
        })?;
        if tag.is_empty() || path.is_empty() {
            return Err(CliError::usage(format!(
                "--source expects a non-empty tag and path, got `{spec}`"
            )));
        }
        sources.push((tag.to_string(), PathBuf::from(path)));
    }
    let manifest = build_mixture_files(&sources, seed, &args.out, &args.manifest)?;
    println!(
        "mixed {} instances from {} sources (removed {} duplicates, seed {}) -> {}",
        manifest.total,
        manifest.sources.len(),
        manifest.dedup_removed,
        manifest.seed,
        args.out.display()
    );
    Ok(())
}
