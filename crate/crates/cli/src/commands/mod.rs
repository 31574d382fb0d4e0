pub mod evaluate;
pub mod filter;
pub mod index;
pub mod mine;
pub mod mix;
pub mod search;
pub mod suite;
pub mod train;

use std::path::{Path, PathBuf};

use crate::CliError;

/// Resolve an index argument: a directory means `<dir>/index.jsonl`.
pub fn index_file(path: &Path) -> PathBuf {
    if path.is_dir() || path.extension().is_none() {
        path.join("index.jsonl")
    } else {
        path.to_path_buf()
    }
}

pub fn write_json_report(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot write {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(file, value)
        .map_err(|e| CliError::Data(anyhow::anyhow!("cannot encode report: {e}")))?;
    Ok(())
}

/// Sibling report path: `out.trec` -> `out.trec.report.json`.
pub fn report_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_os_string();
    s.push(".report.json");
    PathBuf::from(s)
}
