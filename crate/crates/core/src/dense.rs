//! Embedding store and exact brute-force top-k similarity search.
//!
//! Vectors are stored as 32-bit floats; dot products accumulate in
//! 64-bit. Two on-disk layouts are supported:
//!
//! * JSON-lines: one `{"id": "...", "vector": [...]}` object per line.
//! * Flat binary: row-major little-endian f32 values with a sidecar
//!   `<path>.ids` file holding one id per line; the dimension is
//!   `byte_len / (4 * id_count)` and must divide evenly.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_sort, RankedRun, RunEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Dot,
    Cosine,
}

impl std::str::FromStr for Similarity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            other => Err(format!("unknown similarity `{other}` (expected dot or cosine)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VectorStore {
    ids: Vec<String>,
    data: Vec<f32>,
    dim: usize,
    normalized: bool,
}

impl VectorStore {
    /// Assemble a store from rows, enforcing unique ids, a consistent
    /// dimension, and finite components.
    pub fn from_rows(rows: Vec<(String, Vec<f32>)>, expect_dim: Option<usize>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut data = Vec::new();
        let mut dim = expect_dim;
        let mut seen = HashSet::new();
        for (id, vector) in rows {
            let d = *dim.get_or_insert(vector.len());
            if vector.len() != d {
                return Err(Error::DimensionMismatch {
                    id,
                    expected: d,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(id));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidConfig(format!("duplicate vector id `{id}`")));
            }
            ids.push(id);
            data.extend_from_slice(&vector);
        }
        Ok(VectorStore {
            ids,
            data,
            dim: dim.unwrap_or(0),
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids.iter().position(|x| x == id).map(|i| self.row(i))
    }

    /// Rescale every row to unit L2 norm; zero rows stay zero.
    pub fn normalize(&mut self) {
        for i in 0..self.ids.len() {
            let start = i * self.dim;
            let norm = self.data[start..start + self.dim]
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for v in &mut self.data[start..start + self.dim] {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
        self.normalized = true;
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRecord {
    id: String,
    vector: Vec<f32>,
}

/// Load vectors, choosing the layout by extension: `.jsonl` is
/// JSON-lines, anything else is flat binary with a `.ids` sidecar.
pub fn load_vectors(path: &Path, expect_dim: Option<usize>) -> Result<VectorStore> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => load_vectors_jsonl(path, expect_dim),
        _ => load_vectors_binary(path, expect_dim),
    }
}

pub fn load_vectors_jsonl(path: &Path, expect_dim: Option<usize>) -> Result<VectorStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VectorRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, format!("bad vector record: {e}")))?;
        rows.push((rec.id, rec.vector));
    }
    VectorStore::from_rows(rows, expect_dim)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".ids");
    PathBuf::from(s)
}

pub fn load_vectors_binary(path: &Path, expect_dim: Option<usize>) -> Result<VectorStore> {
    let ids_path = sidecar_path(path);
    let ids_file = File::open(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let ids: Vec<String> = BufReader::new(ids_file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(&ids_path, e))?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();

    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if ids.is_empty() {
        return VectorStore::from_rows(Vec::new(), expect_dim);
    }
    if bytes.len() % (4 * ids.len()) != 0 {
        return Err(Error::InvalidConfig(format!(
            "{} has {} bytes which is not divisible by 4 * {} ids",
            path.display(),
            bytes.len(),
            ids.len()
        )));
    }
    let dim = bytes.len() / (4 * ids.len());
    let mut rows = Vec::with_capacity(ids.len());
    let mut offset = 0;
    for id in ids {
        let mut vector = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            vector.push(v);
            offset += 4;
        }
        rows.push((id, vector));
    }
    VectorStore::from_rows(rows, expect_dim)
}

pub fn write_vectors_jsonl(store: &VectorStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, id) in store.ids.iter().enumerate() {
        let rec = VectorRecord {
            id: id.clone(),
            vector: store.row(i).to_vec(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_vectors_binary(store: &VectorStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..store.len() {
        for v in store.row(i) {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let ids_path = sidecar_path(path);
    let ids_file = File::create(&ids_path).map_err(|e| Error::io(&ids_path, e))?;
    let mut w = BufWriter::new(ids_file);
    for id in &store.ids {
        writeln!(w, "{id}").map_err(|e| Error::io(&ids_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&ids_path, e))
}

fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum::<f64>()
}

fn norm_f64(a: &[f32]) -> f64 {
    a.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Exact top-k by the chosen similarity over every stored vector,
/// sorted score desc then doc_id asc. Cosine against a zero vector
/// (query or document) is defined as 0.
pub fn dense_search(
    store: &VectorStore,
    query: &[f32],
    k: usize,
    similarity: Similarity,
) -> Result<Vec<RunEntry>> {
    if query.len() != store.dim {
        return Err(Error::DimensionMismatch {
            id: "query".to_string(),
            expected: store.dim,
            found: query.len(),
        });
    }
    let query_norm = norm_f64(query);
    let mut entries: Vec<RunEntry> = (0..store.len())
        .map(|i| {
            let row = store.row(i);
            let score = match similarity {
                Similarity::Dot => dot_f64(query, row),
                Similarity::Cosine => {
                    let dn = norm_f64(row);
                    if query_norm == 0.0 || dn == 0.0 {
                        0.0
                    } else {
                        dot_f64(query, row) / (query_norm * dn)
                    }
                }
            };
            RunEntry::new(store.ids[i].clone(), score)
        })
        .collect();
    canonical_sort(&mut entries);
    entries.truncate(k);
    Ok(entries)
}

/// Search every query vector in parallel and assemble a run.
pub fn dense_search_all(
    store: &VectorStore,
    queries: &VectorStore,
    k: usize,
    similarity: Similarity,
    tag: &str,
) -> Result<RankedRun> {
    if queries.dim() != store.dim() && !queries.is_empty() && !store.is_empty() {
        return Err(Error::DimensionMismatch {
            id: "query-store".to_string(),
            expected: store.dim(),
            found: queries.dim(),
        });
    }
    let results: Vec<(String, Result<Vec<RunEntry>>)> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            (
                queries.ids()[i].clone(),
                dense_search(store, queries.row(i), k, similarity),
            )
        })
        .collect();
    let mut run = RankedRun::new(tag);
    for (qid, entries) in results {
        run.insert_query(qid, entries?)?;
    }
    Ok(run)
}
