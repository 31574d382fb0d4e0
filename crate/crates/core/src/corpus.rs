//! Collection data model and on-disk formats.
//!
//! Corpora and query sets are JSON-lines (one object per line, UTF-8);
//! a two-column `id<TAB>text` TSV is accepted for both. Relevance
//! judgments use the TREC qrels format `qid 0 docid grade` and ranked
//! lists use the TREC run format `qid Q0 docid rank score tag` with
//! scores printed to six decimals.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            title: None,
        }
    }

    /// Text presented to indexers and encoders: `title + " " + text`
    /// when a title is present.
    pub fn indexing_text(&self) -> String {
        match &self.title {
            Some(title) if !title.is_empty() => format!("{} {}", title, self.text),
            _ => self.text.clone(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("empty doc_id".to_string());
        }
        let has_title = self.title.as_deref().is_some_and(|t| !t.is_empty());
        if self.text.is_empty() && !has_title {
            return Err(format!("document `{}` has no text or title", self.doc_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

impl Query {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            query_id: query_id.into(),
            text: text.into(),
        }
    }
}

/// Graded relevance judgments: query_id -> doc_id -> grade.
///
/// Lookups for an unjudged pair return grade 0, never an error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelsSet {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl QrelsSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.judgments
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.judgments
            .get(query_id)
            .and_then(|docs| docs.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Judged documents with grade >= threshold for one query.
    pub fn relevant_count(&self, query_id: &str, threshold: u32) -> usize {
        self.judgments
            .get(query_id)
            .map(|docs| docs.values().filter(|&&g| g >= threshold).count())
            .unwrap_or(0)
    }

    pub fn query_count(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// One scored document inside a ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

impl RunEntry {
    pub fn new(doc_id: impl Into<String>, score: f64) -> Self {
        RunEntry {
            doc_id: doc_id.into(),
            score,
        }
    }
}

/// Canonical ordering used everywhere: score descending, doc_id ascending.
pub fn canonical_sort(entries: &mut [RunEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

/// Per-query ranked lists with scores; the interchange object between
/// retrievers, miners, and the metric harness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedRun {
    pub tag: String,
    rankings: BTreeMap<String, Vec<RunEntry>>,
}

impl RankedRun {
    pub fn new(tag: impl Into<String>) -> Self {
        RankedRun {
            tag: tag.into(),
            rankings: BTreeMap::new(),
        }
    }

    /// Store the ranking for one query. Entries are re-sorted into
    /// canonical order; duplicate doc_ids and non-finite scores are
    /// rejected.
    pub fn insert_query(&mut self, query_id: impl Into<String>, mut entries: Vec<RunEntry>) -> Result<()> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(Error::NonFinite(format!("{}/{}", query_id, e.doc_id)));
            }
            if !seen.insert(e.doc_id.clone()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate doc_id `{}` in ranking for query `{}`",
                    e.doc_id, query_id
                )));
            }
        }
        canonical_sort(&mut entries);
        self.rankings.insert(query_id, entries);
        Ok(())
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.rankings.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rankings.keys().map(String::as_str)
    }

    pub fn query_count(&self) -> usize {
        self.rankings.len()
    }

    /// 1-based rank of a document within a query's list, if present.
    pub fn rank_of(&self, query_id: &str, doc_id: &str) -> Option<usize> {
        self.rankings
            .get(query_id)?
            .iter()
            .position(|e| e.doc_id == doc_id)
            .map(|p| p + 1)
    }

    pub fn score_of(&self, query_id: &str, doc_id: &str) -> Option<f64> {
        self.rankings
            .get(query_id)?
            .iter()
            .find(|e| e.doc_id == doc_id)
            .map(|e| e.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Jsonl,
    Tsv,
}

impl FileFormat {
    /// `.tsv` means TSV; anything else is treated as JSON-lines.
    pub fn detect(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => FileFormat::Tsv,
            _ => FileFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(FileFormat::Jsonl),
            "tsv" => Ok(FileFormat::Tsv),
            other => Err(format!("unknown format `{other}` (expected jsonl or tsv)")),
        }
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

/// Load a corpus, preserving file order. Duplicate doc_ids are a hard
/// error naming the id; malformed records report their line number.
/// An empty file yields an empty corpus.
pub fn load_corpus(path: &Path, format: FileFormat) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = match format {
            FileFormat::Jsonl => serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, line_no, format!("bad corpus record: {e}")))?,
            FileFormat::Tsv => {
                let (id, text) = split_tsv(&line)
                    .ok_or_else(|| Error::parse(path, line_no, "expected `id<TAB>text`"))?;
                Document::new(id, text)
            }
        };
        doc.validate()
            .map_err(|msg| Error::parse(path, line_no, msg))?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: doc.doc_id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Load a query set; query_ids must be unique and texts non-empty.
pub fn load_queries(path: &Path, format: FileFormat) -> Result<Vec<Query>> {
    let mut queries = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let query: Query = match format {
            FileFormat::Jsonl => serde_json::from_str(&line)
                .map_err(|e| Error::parse(path, line_no, format!("bad query record: {e}")))?,
            FileFormat::Tsv => {
                let (id, text) = split_tsv(&line)
                    .ok_or_else(|| Error::parse(path, line_no, "expected `id<TAB>text`"))?;
                Query::new(id, text)
            }
        };
        if query.query_id.is_empty() || query.text.is_empty() {
            return Err(Error::parse(path, line_no, "query needs a non-empty id and text"));
        }
        if !seen.insert(query.query_id.clone()) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: query.query_id,
            });
        }
        queries.push(query);
    }
    Ok(queries)
}

fn split_tsv(line: &str) -> Option<(&str, &str)> {
    let (id, text) = line.split_once('\t')?;
    if id.is_empty() || text.is_empty() {
        return None;
    }
    Some((id, text))
}

/// Parse TREC qrels (`qid 0 docid grade`, whitespace-separated).
///
/// A repeated (qid, docid) pair keeps the last grade and logs a warning.
/// Negative or non-integer grades are an error naming the line.
pub fn load_qrels(path: &Path) -> Result<QrelsSet> {
    let mut qrels = QrelsSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields `qid 0 docid grade`, found {}", fields.len()),
            ));
        }
        let grade: u32 = fields[3].parse().map_err(|_| {
            Error::parse(path, line_no, format!("bad relevance grade `{}`", fields[3]))
        })?;
        if qrels
            .for_query(fields[0])
            .is_some_and(|docs| docs.contains_key(fields[2]))
        {
            log::warn!(
                "{}:{}: repeated judgment for ({}, {}); keeping the last grade",
                path.display(),
                line_no,
                fields[0],
                fields[2]
            );
        }
        qrels.insert(fields[0], fields[2], grade);
    }
    Ok(qrels)
}

/// Parse a TREC run file (`qid Q0 docid rank score tag`).
///
/// The stored rank field is ignored; entries are re-sorted into
/// canonical order (score desc, doc_id asc) and re-ranked 1..n.
pub fn read_run(path: &Path) -> Result<RankedRun> {
    let mut tag = String::new();
    let mut per_query: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (line_no, line) in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 6 fields `qid Q0 docid rank score tag`, found {}", fields.len()),
            ));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad score `{}`", fields[4])))?;
        if !score.is_finite() {
            return Err(Error::parse(path, line_no, format!("non-finite score `{}`", fields[4])));
        }
        if !seen.insert((fields[0].to_string(), fields[2].to_string())) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: format!("{}/{}", fields[0], fields[2]),
            });
        }
        if tag.is_empty() {
            tag = fields[5].to_string();
        }
        per_query
            .entry(fields[0].to_string())
            .or_default()
            .push(RunEntry::new(fields[2], score));
    }
    let mut run = RankedRun::new(tag);
    for (qid, entries) in per_query {
        run.insert_query(qid, entries)?;
    }
    Ok(run)
}

/// Write a run in TREC format, scores printed to six decimals.
pub fn write_run(run: &RankedRun, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (qid, entries) in &run.rankings {
        for (i, e) in entries.iter().enumerate() {
            writeln!(w, "{} Q0 {} {} {:.6} {}", qid, e.doc_id, i + 1, e.score, run.tag)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
