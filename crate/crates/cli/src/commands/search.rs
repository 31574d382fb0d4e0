use std::path::PathBuf;

use clap::{Args, Subcommand};
use retkit_core::bm25::{bm25_search_all, load_index, Bm25Params};
use retkit_core::corpus::{load_queries, write_run};
use retkit_core::dense::{dense_search_all, load_vectors, Similarity};

use super::{index_file, write_json_report};
use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum SearchBackend {
    /// Lexical first-stage retrieval over a persisted index
    Bm25(Bm25Args),
    /// Exact brute-force similarity search over vector files
    Dense(DenseArgs),
}

#[derive(Args)]
pub struct Bm25Args {
    /// Index directory (or index.jsonl path)
    #[arg(long)]
    index: PathBuf,

    /// Query file (JSON-lines with query_id/text, or TSV)
    #[arg(long)]
    queries: PathBuf,

    /// Results per query
    #[arg(long, default_value_t = 1000)]
    k: usize,

    /// Run tag written into the TREC output
    #[arg(long, default_value = "bm25")]
    tag: String,

    /// Output run file
    #[arg(long)]
    run: PathBuf,

    /// Query format; inferred from the extension when omitted
    #[arg(long)]
    format: Option<String>,

    /// Override the k1 recorded in the index
    #[arg(long)]
    k1: Option<f64>,

    /// Override the b recorded in the index
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args)]
pub struct DenseArgs {
    /// Document vectors (.jsonl, or flat f32 binary with .ids sidecar)
    #[arg(long)]
    vectors: PathBuf,

    /// Query vectors (same layouts)
    #[arg(long)]
    query_vectors: PathBuf,

    /// Results per query
    #[arg(long, default_value_t = 1000)]
    k: usize,

    /// Similarity: dot or cosine
    #[arg(long, default_value = "cosine")]
    sim: String,

    /// Run tag written into the TREC output
    #[arg(long, default_value = "dense")]
    tag: String,

    /// Output run file
    #[arg(long)]
    run: PathBuf,

    /// Expected dimension (checked at load)
    #[arg(long)]
    dim: Option<usize>,

    /// L2-normalize documents and queries before searching
    #[arg(long)]
    normalize: bool,
}

pub fn run(backend: SearchBackend) -> CliResult {
    match backend {
        SearchBackend::Bm25(args) => run_bm25(args),
        SearchBackend::Dense(args) => run_dense(args),
    }
}

fn run_bm25(args: Bm25Args) -> CliResult {
    if args.k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let format = super::index::parse_format(args.format.as_deref(), &args.queries)?;
    let index = load_index(&index_file(&args.index))?;
    let params = Bm25Params {
        k1: args.k1.unwrap_or(index.default_params().k1),
        b: args.b.unwrap_or(index.default_params().b),
    };
    let queries = load_queries(&args.queries, format)?;
    let run = bm25_search_all(&index, params, &queries, args.k, &args.tag)?;
    write_run(&run, &args.run)?;
    let total_results: usize = run
        .query_ids()
        .map(|q| run.ranking(q).map(<[_]>::len).unwrap_or(0))
        .sum();
    write_json_report(
        &super::report_path(&args.run),
        &serde_json::json!({
            "backend": "bm25",
            "queries": queries.len(),
            "results": total_results,
            "k": args.k,
            "k1": params.k1,
            "b": params.b,
            "tag": args.tag,
        }),
    )?;
    println!(
        "searched {} queries -> {} ({} results)",
        queries.len(),
        args.run.display(),
        total_results
    );
    Ok(())
}

fn run_dense(args: DenseArgs) -> CliResult {
    if args.k < 1 {
        return Err(CliError::usage("--k must be >= 1"));
    }
    let similarity: Similarity = args.sim.parse().map_err(CliError::Usage)?;
    let mut docs = load_vectors(&args.vectors, args.dim)?;
    let mut queries = load_vectors(&args.query_vectors, args.dim.or(Some(docs.dim())))?;
    if args.normalize {
        docs.normalize();
        queries.normalize();
    }
    let run = dense_search_all(&docs, &queries, args.k, similarity, &args.tag)?;
    write_run(&run, &args.run)?;
    write_json_report(
        &super::report_path(&args.run),
        &serde_json::json!({
            "backend": "dense",
            "documents": docs.len(),
            "queries": queries.len(),
            "dim": docs.dim(),
            "k": args.k,
            "similarity": args.sim,
            "normalized": docs.is_normalized(),
            "tag": args.tag,
        }),
    )?;
    println!(
        "searched {} queries over {} vectors -> {}",
        queries.len(),
        docs.len(),
        args.run.display()
    );
    Ok(())
}
