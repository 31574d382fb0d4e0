//! Tokenizer, inverted index, and BM25 scoring.
//!
//! The scorer uses Robertson term weighting with the non-negative
//! `ln(1 + (N - df + 0.5) / (df + 0.5))` IDF and defaults k1 = 0.9,
//! b = 0.4. No stemming; stopword removal is off unless a list is
//! supplied at build time. The index is persisted as JSON-lines with a
//! version header (see [`save_index`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{canonical_sort, Document, Query, RankedRun, RunEntry};
use crate::error::{Error, Result};

/// Lowercased Unicode-alphanumeric word segmentation. Diacritics are
/// preserved; punctuation and symbols split tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lower in ch.to_lowercase() {
                current.push(lower);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenize and drop stopwords when a list is configured.
pub fn tokenize_filtered(text: &str, stopwords: Option<&HashSet<String>>) -> Vec<String> {
    let tokens = tokenize(text);
    match stopwords {
        None => tokens,
        Some(list) => tokens.into_iter().filter(|t| !list.contains(t)).collect(),
    }
}

/// Common Portuguese function words, for the optional stopword flag.
/// Legal citations and statute numbers are never in this list.
pub const PORTUGUESE_STOPWORDS: &[&str] = &[
    "a", "ao", "aos", "aquela", "aquelas", "aquele", "aqueles", "aquilo", "as", "até", "com",
    "como", "da", "das", "de", "dela", "delas", "dele", "deles", "depois", "do", "dos", "e",
    "ela", "elas", "ele", "eles", "em", "entre", "era", "eram", "essa", "essas", "esse", "esses",
    "esta", "estas", "este", "estes", "eu", "foi", "for", "foram", "há", "isso", "isto", "já",
    "lhe", "lhes", "mais", "mas", "me", "mesmo", "meu", "meus", "minha", "minhas", "muito", "na",
    "não", "nas", "nem", "no", "nos", "nós", "nossa", "nossas", "nosso", "nossos", "num", "numa",
    "o", "os", "ou", "para", "pela", "pelas", "pelo", "pelos", "por", "qual", "quando", "que",
    "quem", "se", "sem", "ser", "seu", "seus", "só", "sua", "suas", "também", "te", "tem", "têm",
    "teu", "teus", "tu", "tua", "tuas", "um", "uma", "você", "vocês", "vos", "à", "às",
];

pub fn portuguese_stopwords() -> HashSet<String> {
    PORTUGUESE_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    /// Term-frequency saturation, k1 >= 0.
    pub k1: f64,
    /// Length normalization in [0, 1].
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidConfig(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidConfig(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    default_params: Bm25Params,
    stopwords: Option<HashSet<String>>,
    stopword_list_name: String,
    doc_ids: Vec<String>,
    doc_lookup: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl InvertedIndex {
    /// Build from a corpus. Indexing text is `title + " " + text` when a
    /// title is present. An empty corpus is an error.
    pub fn build(
        corpus: &[Document],
        params: Bm25Params,
        stopwords: Option<HashSet<String>>,
        stopword_list_name: &str,
    ) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lookup = HashMap::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();

        for (internal, doc) in corpus.iter().enumerate() {
            let internal = internal as u32;
            if doc_lookup.insert(doc.doc_id.clone(), internal).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate doc_id `{}` in corpus",
                    doc.doc_id
                )));
            }
            doc_ids.push(doc.doc_id.clone());
            let tokens = tokenize_filtered(&doc.indexing_text(), stopwords.as_ref());
            doc_lengths.push(tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push((internal, tf));
            }
        }
        let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64;
        Ok(InvertedIndex {
            default_params: params,
            stopwords,
            stopword_list_name: stopword_list_name.to_string(),
            doc_ids,
            doc_lookup,
            doc_lengths,
            avgdl,
            postings,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn default_params(&self) -> Bm25Params {
        self.default_params
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map(Vec::len).unwrap_or(0)
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<u32> {
        self.doc_lookup.get(doc_id).map(|&i| self.doc_lengths[i as usize])
    }

    pub fn term_frequency(&self, term: &str, doc_id: &str) -> u32 {
        let Some(&internal) = self.doc_lookup.get(doc_id) else {
            return 0;
        };
        self.postings
            .get(term)
            .and_then(|p| p.iter().find(|(d, _)| *d == internal))
            .map(|(_, tf)| *tf)
            .unwrap_or(0)
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn contains_doc(&self, doc_id: &str) -> bool {
        self.doc_lookup.contains_key(doc_id)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Tokenize a query with the index's analyzer and deduplicate terms,
    /// keeping first-occurrence order.
    pub fn query_terms(&self, query: &str) -> Vec<String> {
        let mut seen = HashSet::new();
        tokenize_filtered(query, self.stopwords.as_ref())
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .collect()
    }

    pub fn stopword_list_name(&self) -> &str {
        &self.stopword_list_name
    }
}

/// Shorthand for [`InvertedIndex::build`] without stopwords.
pub fn build_index(corpus: &[Document], params: Bm25Params) -> Result<InvertedIndex> {
    InvertedIndex::build(corpus, params, None, "none")
}

/// BM25 score of one document against pre-tokenized query terms.
/// Each unique term is scored once; terms absent from the index
/// contribute zero. Unknown doc_ids are an error.
pub fn bm25_score(
    index: &InvertedIndex,
    params: Bm25Params,
    query_tokens: &[String],
    doc_id: &str,
) -> Result<f64> {
    params.validate()?;
    let Some(&internal) = index.doc_lookup.get(doc_id) else {
        return Err(Error::UnknownDocId(doc_id.to_string()));
    };
    let dl = index.doc_lengths[internal as usize] as f64;
    let mut seen = HashSet::new();
    let mut score = 0.0;
    for term in query_tokens {
        if !seen.insert(term.as_str()) {
            continue;
        }
        let Some(postings) = index.postings.get(term.as_str()) else {
            continue;
        };
        let Some(&(_, tf)) = postings.iter().find(|(d, _)| *d == internal) else {
            continue;
        };
        score += term_score(index.idf(postings.len()), tf as f64, dl, index.avgdl, params);
    }
    Ok(score)
}

fn term_score(idf: f64, tf: f64, dl: f64, avgdl: f64, params: Bm25Params) -> f64 {
    let norm = 1.0 - params.b + params.b * dl / avgdl;
    idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
}

/// Top-k BM25 search for one query. The candidate set is the union of
/// the postings of the query terms; results are sorted score desc,
/// doc_id asc. A query with no indexed terms yields an empty list.
pub fn bm25_search(
    index: &InvertedIndex,
    params: Bm25Params,
    query: &str,
    k: usize,
) -> Result<Vec<RunEntry>> {
    params.validate()?;
    let terms = index.query_terms(query);
    let mut acc: HashMap<u32, f64> = HashMap::new();
    for term in &terms {
        let Some(postings) = index.postings.get(term.as_str()) else {
            continue;
        };
        let idf = index.idf(postings.len());
        for &(doc, tf) in postings {
            let dl = index.doc_lengths[doc as usize] as f64;
            *acc.entry(doc).or_insert(0.0) +=
                term_score(idf, tf as f64, dl, index.avgdl, params);
        }
    }
    let mut entries: Vec<RunEntry> = acc
        .into_iter()
        .map(|(doc, score)| RunEntry::new(index.doc_ids[doc as usize].clone(), score))
        .collect();
    canonical_sort(&mut entries);
    entries.truncate(k);
    Ok(entries)
}

/// Search a batch of queries in parallel and assemble a run.
pub fn bm25_search_all(
    index: &InvertedIndex,
    params: Bm25Params,
    queries: &[Query],
    k: usize,
    tag: &str,
) -> Result<RankedRun> {
    let results: Vec<(String, Result<Vec<RunEntry>>)> = queries
        .par_iter()
        .map(|q| (q.query_id.clone(), bm25_search(index, params, &q.text, k)))
        .collect();
    let mut run = RankedRun::new(tag);
    for (qid, entries) in results {
        run.insert_query(qid, entries?)?;
    }
    Ok(run)
}

const INDEX_FORMAT: &str = "retkit-bm25-index";
const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum IndexRecord {
    Header {
        format: String,
        version: u32,
        doc_count: usize,
        avgdl: f64,
        k1: f64,
        b: f64,
        stopwords: String,
    },
    Doc {
        id: String,
        len: u32,
    },
    Term {
        t: String,
        postings: Vec<(u32, u32)>,
    },
}

/// Persist an index as JSON-lines: a header record, one `doc` record per
/// document in internal order, then one `term` record per term.
pub fn save_index(index: &InvertedIndex, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = IndexRecord::Header {
        format: INDEX_FORMAT.to_string(),
        version: INDEX_VERSION,
        doc_count: index.doc_count(),
        avgdl: index.avgdl,
        k1: index.default_params.k1,
        b: index.default_params.b,
        stopwords: index.stopword_list_name.clone(),
    };
    let mut write_record = |rec: &IndexRecord| -> Result<()> {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    write_record(&header)?;
    for (i, id) in index.doc_ids.iter().enumerate() {
        write_record(&IndexRecord::Doc {
            id: id.clone(),
            len: index.doc_lengths[i],
        })?;
    }
    for (term, postings) in &index.postings {
        write_record(&IndexRecord::Term {
            t: term.clone(),
            postings: postings.clone(),
        })?;
    }
    Ok(())
}

pub fn load_index(path: &Path) -> Result<InvertedIndex> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty index file"))?;
    let first = first.map_err(|e| Error::io(path, e))?;
    let header: IndexRecord = serde_json::from_str(&first)
        .map_err(|e| Error::parse(path, 1, format!("bad index header: {e}")))?;
    let (doc_count, avgdl, params, stopword_name) = match header {
        IndexRecord::Header {
            format,
            version,
            doc_count,
            avgdl,
            k1,
            b,
            stopwords,
        } => {
            if format != INDEX_FORMAT || version != INDEX_VERSION {
                return Err(Error::parse(
                    path,
                    1,
                    format!("unsupported index format {format} v{version}"),
                ));
            }
            (doc_count, avgdl, Bm25Params { k1, b }, stopwords)
        }
        _ => return Err(Error::parse(path, 1, "first record must be the header")),
    };

    let stopwords = match stopword_name.as_str() {
        "none" => None,
        "portuguese" => Some(portuguese_stopwords()),
        other => {
            return Err(Error::parse(path, 1, format!("unknown stopword list `{other}`")));
        }
    };

    let mut doc_ids = Vec::with_capacity(doc_count);
    let mut doc_lengths = Vec::with_capacity(doc_count);
    let mut postings = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: IndexRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        match rec {
            IndexRecord::Doc { id, len } => {
                doc_ids.push(id);
                doc_lengths.push(len);
            }
            IndexRecord::Term { t, postings: p } => {
                postings.insert(t, p);
            }
            IndexRecord::Header { .. } => {
                return Err(Error::parse(path, idx + 1, "unexpected second header"));
            }
        }
    }
    if doc_ids.len() != doc_count {
        return Err(Error::parse(
            path,
            0,
            format!("header claims {doc_count} docs, found {}", doc_ids.len()),
        ));
    }
    let doc_lookup = doc_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i as u32))
        .collect();
    Ok(InvertedIndex {
        default_params: params,
        stopwords,
        stopword_list_name: stopword_name,
        doc_ids,
        doc_lookup,
        doc_lengths,
        avgdl,
        postings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[(&str, &str)]) -> Vec<Document> {
        texts.iter().map(|(id, t)| Document::new(*id, *t)).collect()
    }

    #[test]
    fn tokenize_statute_reference() {
        assert_eq!(tokenize("Lei 9.717/1998"), vec!["lei", "9", "717", "1998"]);
    }

    #[test]
    fn tokenize_empty_and_case_folding() {
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("Conluio CONLUIO"), vec!["conluio", "conluio"]);
    }

    #[test]
    fn tokenize_preserves_diacritics() {
        assert_eq!(tokenize("decisão Órgão"), vec!["decisão", "órgão"]);
    }

    #[test]
    fn build_counts_single_doc() {
        let idx = build_index(&corpus(&[("d1", "a b a")]), Bm25Params::default()).unwrap();
        assert_eq!(idx.df("a"), 1);
        assert_eq!(idx.term_frequency("a", "d1"), 2);
        assert!((idx.avgdl() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn build_counts_two_docs() {
        let idx = build_index(&corpus(&[("d1", "a"), ("d2", "a b")]), Bm25Params::default()).unwrap();
        assert_eq!(idx.df("a"), 2);
        assert_eq!(idx.df("b"), 1);
        assert!((idx.avgdl() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn build_empty_corpus_is_error() {
        assert!(matches!(build_index(&[], Bm25Params::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn build_uses_title_plus_text() {
        let mut doc = Document::new("d1", "corpo");
        doc.title = Some("titulo".to_string());
        let idx = build_index(&[doc], Bm25Params::default()).unwrap();
        assert_eq!(idx.df("titulo"), 1);
        assert_eq!(idx.df("corpo"), 1);
        assert_eq!(idx.doc_length("d1"), Some(2));
    }

    // Closed-form value evaluated independently:
    // idf = ln(1 + (2-1+0.5)/(1+0.5)) = ln 2; tf = 1, dl = 2, avgdl = 1.5
    // score = ln2 * 1.9 / (1 + 0.9*(0.6 + 0.4*2/1.5)) = 0.6519701203286614
    #[test]
    fn score_worked_example() {
        let idx = build_index(&corpus(&[("d1", "a b"), ("d2", "a")]), Bm25Params::default()).unwrap();
        let score = bm25_score(&idx, Bm25Params::default(), &["b".to_string()], "d1").unwrap();
        assert!((score - 0.6519701203286614).abs() < 1e-12, "score = {score}");
    }

    #[test]
    fn score_unknown_terms_contribute_zero() {
        let idx = build_index(&corpus(&[("d1", "a b")]), Bm25Params::default()).unwrap();
        let score = bm25_score(
            &idx,
            Bm25Params::default(),
            &["zz".to_string(), "b".to_string()],
            "d1",
        )
        .unwrap();
        let only_b = bm25_score(&idx, Bm25Params::default(), &["b".to_string()], "d1").unwrap();
        assert_eq!(score, only_b);
        let all_unknown =
            bm25_score(&idx, Bm25Params::default(), &["zz".to_string()], "d1").unwrap();
        assert_eq!(all_unknown, 0.0);
    }

    #[test]
    fn score_empty_query_is_zero_and_unknown_doc_is_error() {
        let idx = build_index(&corpus(&[("d1", "a")]), Bm25Params::default()).unwrap();
        assert_eq!(bm25_score(&idx, Bm25Params::default(), &[], "d1").unwrap(), 0.0);
        assert!(matches!(
            bm25_score(&idx, Bm25Params::default(), &[], "nope"),
            Err(Error::UnknownDocId(_))
        ));
    }

    #[test]
    fn score_duplicate_query_terms_counted_once() {
        let idx = build_index(&corpus(&[("d1", "a b"), ("d2", "a")]), Bm25Params::default()).unwrap();
        let once = bm25_score(&idx, Bm25Params::default(), &["b".to_string()], "d1").unwrap();
        let twice = bm25_score(
            &idx,
            Bm25Params::default(),
            &["b".to_string(), "b".to_string()],
            "d1",
        )
        .unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn search_single_term() {
        let idx = build_index(&corpus(&[("d1", "a b"), ("d2", "a")]), Bm25Params::default()).unwrap();
        let hits = bm25_search(&idx, Bm25Params::default(), "b", 10).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d1");
        assert!((hits[0].score - 0.6519701203286614).abs() < 1e-12);
    }

    #[test]
    fn search_shorter_doc_ranks_first() {
        let idx = build_index(&corpus(&[("d1", "a b"), ("d2", "a")]), Bm25Params::default()).unwrap();
        let hits = bm25_search(&idx, Bm25Params::default(), "a", 10).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].doc_id, "d2");
        assert!(hits[0].score > hits[1].score);
    }

    #[test]
    fn search_truncates_to_k() {
        let idx = build_index(&corpus(&[("d1", "a b"), ("d2", "a")]), Bm25Params::default()).unwrap();
        let hits = bm25_search(&idx, Bm25Params::default(), "a", 1).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn search_no_indexed_terms_is_empty() {
        let idx = build_index(&corpus(&[("d1", "a")]), Bm25Params::default()).unwrap();
        assert!(bm25_search(&idx, Bm25Params::default(), "zz yy", 10).unwrap().is_empty());
    }

    #[test]
    fn stopword_filtering_applies_to_docs_and_queries() {
        let docs = corpus(&[("d1", "a lei de imposto"), ("d2", "outra norma")]);
        let idx = InvertedIndex::build(
            &docs,
            Bm25Params::default(),
            Some(portuguese_stopwords()),
            "portuguese",
        )
        .unwrap();
        assert_eq!(idx.df("de"), 0);
        assert_eq!(idx.doc_length("d1"), Some(2));
        assert_eq!(idx.query_terms("a lei"), vec!["lei"]);
    }

    #[test]
    fn index_round_trip() {
        let docs = corpus(&[("d1", "lei tributária"), ("d2", "norma lei")]);
        let idx = build_index(&docs, Bm25Params::default()).unwrap();
        let f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        save_index(&idx, f.path()).unwrap();
        let back = load_index(f.path()).unwrap();
        assert_eq!(back.doc_count(), 2);
        assert_eq!(back.df("lei"), 2);
        assert_eq!(back.avgdl(), idx.avgdl());
        let a = bm25_search(&idx, idx.default_params(), "lei", 10).unwrap();
        let b = bm25_search(&back, back.default_params(), "lei", 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_search_output() {
        let docs = corpus(&[("d1", "a b c"), ("d2", "a c"), ("d3", "b c a")]);
        let idx = build_index(&docs, Bm25Params::default()).unwrap();
        let a = bm25_search(&idx, Bm25Params::default(), "a b", 10).unwrap();
        let b = bm25_search(&idx, Bm25Params::default(), "a b", 10).unwrap();
        assert_eq!(a, b);
    }
}
