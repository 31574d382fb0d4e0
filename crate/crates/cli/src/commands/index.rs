use std::path::PathBuf;

use clap::{Args, Subcommand};
use retkit_core::bm25::{portuguese_stopwords, save_index, Bm25Params, InvertedIndex};
use retkit_core::corpus::{load_corpus, FileFormat};

use super::write_json_report;
use crate::{CliError, CliResult};

#[derive(Subcommand)]
pub enum IndexAction {
    /// Build an index from a corpus file
    Build(BuildArgs),
}

#[derive(Args)]
pub struct BuildArgs {
    /// Corpus file (JSON-lines with doc_id/text/title, or TSV)
    #[arg(long)]
    corpus: PathBuf,

    /// Output directory (or explicit .jsonl file path)
    #[arg(long)]
    out: PathBuf,

    /// Corpus format; inferred from the extension when omitted
    #[arg(long)]
    format: Option<String>,

    /// Term-frequency saturation
    #[arg(long, default_value_t = 0.9)]
    k1: f64,

    /// Length normalization in [0, 1]
    #[arg(long, default_value_t = 0.4)]
    b: f64,

    /// Stopword list: none or portuguese
    #[arg(long, default_value = "none")]
    stopwords: String,
}

pub fn run(action: IndexAction) -> CliResult {
    let IndexAction::Build(args) = action;
    let format = parse_format(args.format.as_deref(), &args.corpus)?;
    let (stopwords, list_name) = match args.stopwords.as_str() {
        "none" => (None, "none"),
        "portuguese" => (Some(portuguese_stopwords()), "portuguese"),
        other => {
            return Err(CliError::usage(format!(
                "unknown stopword list `{other}` (expected none or portuguese)"
            )))
        }
    };
    let params = Bm25Params {
        k1: args.k1,
        b: args.b,
    };
    let corpus = load_corpus(&args.corpus, format)?;
    let index = InvertedIndex::build(&corpus, params, stopwords, list_name)?;

    let out_file = if args.out.extension().is_some() {
        args.out.clone()
    } else {
        std::fs::create_dir_all(&args.out)
            .map_err(|e| CliError::Data(anyhow::anyhow!("cannot create {}: {e}", args.out.display())))?;
        args.out.join("index.jsonl")
    };
    save_index(&index, &out_file)?;
    write_json_report(
        &super::report_path(&out_file),
        &serde_json::json!({
            "corpus": args.corpus.display().to_string(),
            "doc_count": index.doc_count(),
            "avgdl": index.avgdl(),
            "k1": params.k1,
            "b": params.b,
            "stopwords": list_name,
        }),
    )?;
    println!(
        "indexed {} documents (avgdl {:.2}) -> {}",
        index.doc_count(),
        index.avgdl(),
        out_file.display()
    );
    Ok(())
}

pub fn parse_format(format: Option<&str>, path: &std::path::Path) -> Result<FileFormat, CliError> {
    match format {
        None => Ok(FileFormat::detect(path)),
        Some(s) => s.parse().map_err(CliError::Usage),
    }
}
