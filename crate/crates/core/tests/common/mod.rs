//! Independent oracles and synthetic data generators shared by the
//! integration suites. Every oracle here recomputes its answer from
//! first principles (raw counts, linear scans, direct formulas) and
//! never calls the implementation path it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand_chacha::rand_core::Rng as _;
use rand_chacha::ChaCha8Rng;

use retkit_core::corpus::{Document, QrelsSet, Query, RankedRun, RunEntry};
use retkit_core::mining::{PositiveDoc, ScoredDoc, TrainingInstance};
use retkit_core::mixture::seeded_rng;
use retkit_core::trainer::TrainEvalSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn range(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    (rng.next_u64() % bound as u64) as usize
}

// ---------------------------------------------------------------------
// metric oracles
// ---------------------------------------------------------------------

fn oracle_gain(grade: u32, exponential: bool) -> f64 {
    if exponential {
        2f64.powi(grade as i32) - 1.0
    } else {
        grade as f64
    }
}

/// Discount written as ln2/ln(i+2) rather than 1/log2(i+2).
fn oracle_discount(position: usize) -> f64 {
    std::f64::consts::LN_2 / ((position + 2) as f64).ln()
}

pub fn oracle_ndcg(
    ranking: &[String],
    qrels: &BTreeMap<String, u32>,
    k: usize,
    exponential: bool,
) -> f64 {
    let mut dcg = 0.0;
    for (i, doc) in ranking.iter().enumerate() {
        if i >= k {
            break;
        }
        let grade = qrels.get(doc).copied().unwrap_or(0);
        dcg += oracle_gain(grade, exponential) * oracle_discount(i);
    }
    let mut grades: Vec<u32> = qrels.values().copied().collect();
    grades.sort_unstable();
    grades.reverse();
    let mut idcg = 0.0;
    for (i, &grade) in grades.iter().enumerate() {
        if i >= k {
            break;
        }
        idcg += oracle_gain(grade, exponential) * oracle_discount(i);
    }
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

pub fn oracle_mrr(
    ranking: &[String],
    qrels: &BTreeMap<String, u32>,
    k: usize,
    threshold: u32,
) -> f64 {
    for (i, doc) in ranking.iter().enumerate() {
        if i >= k {
            break;
        }
        if qrels.get(doc).copied().unwrap_or(0) >= threshold {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

/// AP@k with precision-at-i recomputed by rescanning the prefix, and
/// the full relevant count as denominator.
pub fn oracle_map(
    ranking: &[String],
    qrels: &BTreeMap<String, u32>,
    k: usize,
    threshold: u32,
) -> f64 {
    let relevant = |doc: &String| qrels.get(doc).copied().unwrap_or(0) >= threshold;
    let total_relevant = qrels.values().filter(|&&g| g >= threshold).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..ranking.len().min(k) {
        if relevant(&ranking[i]) {
            let hits_so_far = ranking[..=i].iter().filter(|d| relevant(d)).count();
            sum += hits_so_far as f64 / (i as f64 + 1.0);
        }
    }
    sum / total_relevant as f64
}

// ---------------------------------------------------------------------
// bm25 oracle: raw recount over token lists, no index involved
// ---------------------------------------------------------------------

pub fn oracle_bm25_score(
    doc_tokens: &[Vec<String>],
    doc: usize,
    query_terms: &[String],
    k1: f64,
    b: f64,
) -> f64 {
    let n = doc_tokens.len() as f64;
    let avgdl = doc_tokens.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let dl = doc_tokens[doc].len() as f64;
    let mut unique: Vec<&String> = Vec::new();
    for t in query_terms {
        if !unique.contains(&t) {
            unique.push(t);
        }
    }
    let mut score = 0.0;
    for term in unique {
        let tf = doc_tokens[doc].iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = doc_tokens
            .iter()
            .filter(|tokens| tokens.iter().any(|t| t == term))
            .count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    score
}

/// Exhaustively score every document, keep nonzero scores, and order by
/// (score desc, doc_id asc).
pub fn oracle_bm25_topk(
    doc_ids: &[String],
    doc_tokens: &[Vec<String>],
    query_terms: &[String],
    k1: f64,
    b: f64,
    k: usize,
) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = (0..doc_tokens.len())
        .map(|i| {
            (
                doc_ids[i].clone(),
                oracle_bm25_score(doc_tokens, i, query_terms, k1, b),
            )
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}

// ---------------------------------------------------------------------
// dense oracle: full linear scan in f64
// ---------------------------------------------------------------------

pub fn oracle_dense_topk(
    ids: &[String],
    rows: &[Vec<f32>],
    query: &[f32],
    k: usize,
    cosine: bool,
) -> Vec<(String, f64)> {
    let dot = |a: &[f32], b: &[f32]| -> f64 {
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += a[i] as f64 * b[i] as f64;
        }
        acc
    };
    let norm = |a: &[f32]| -> f64 { dot(a, a).sqrt() };
    let qn = norm(query);
    let mut scored: Vec<(String, f64)> = ids
        .iter()
        .zip(rows)
        .map(|(id, row)| {
            let score = if cosine {
                let rn = norm(row);
                if qn == 0.0 || rn == 0.0 {
                    0.0
                } else {
                    dot(query, row) / (qn * rn)
                }
            } else {
                dot(query, row)
            };
            (id.clone(), score)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
}

// ---------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------

/// Random corpus over a closed vocabulary `t0..t{vocab}`.
pub fn random_corpus(
    rng: &mut ChaCha8Rng,
    num_docs: usize,
    vocab: usize,
    max_len: usize,
) -> (Vec<Document>, Vec<Vec<String>>) {
    let mut docs = Vec::with_capacity(num_docs);
    let mut tokens = Vec::with_capacity(num_docs);
    for i in 0..num_docs {
        let len = 1 + range(rng, max_len);
        let words: Vec<String> = (0..len).map(|_| format!("t{}", range(rng, vocab))).collect();
        docs.push(Document::new(format!("d{i:04}"), words.join(" ")));
        tokens.push(words);
    }
    (docs, tokens)
}

/// Random (qrels, run) pair for one query over a shared doc pool.
pub fn random_eval_instance(
    rng: &mut ChaCha8Rng,
    max_docs: usize,
    max_grade: u32,
) -> (Vec<String>, BTreeMap<String, u32>) {
    let pool = 2 + range(rng, max_docs.max(3) - 2);
    let ids: Vec<String> = (0..pool).map(|i| format!("d{i:03}")).collect();
    let mut qrels = BTreeMap::new();
    for id in &ids {
        if range(rng, 100) < 40 {
            qrels.insert(id.clone(), range(rng, max_grade as usize + 1) as u32);
        }
    }
    let mut ranking = ids.clone();
    // seeded permutation of the retrieved order, random truncation
    for i in (1..ranking.len()).rev() {
        let j = range(rng, i + 1);
        ranking.swap(i, j);
    }
    let keep = 1 + range(rng, ranking.len());
    ranking.truncate(keep);
    (ranking, qrels)
}

/// Build a RankedRun for a single query from an ordered doc list,
/// assigning strictly decreasing scores so order survives re-sorting.
pub fn run_from_ranking(tag: &str, query_id: &str, ranking: &[String]) -> RankedRun {
    let mut run = RankedRun::new(tag);
    let entries: Vec<RunEntry> = ranking
        .iter()
        .enumerate()
        .map(|(i, d)| RunEntry::new(d.clone(), 1000.0 - i as f64))
        .collect();
    run.insert_query(query_id, entries).unwrap();
    run
}

/// A synthetic collection in which query i shares the token `k{i}` with
/// its positive document and nothing else: trainable to near-perfect
/// retrieval, near-chance at random init.
pub fn separable_collection(
    num_queries: usize,
    num_docs: usize,
    negatives_per_instance: usize,
    seed: u64,
) -> (Vec<TrainingInstance>, TrainEvalSet) {
    assert!(num_docs >= num_queries);
    let mut r = rng(seed);
    let mut corpus = Vec::with_capacity(num_docs);
    for i in 0..num_docs {
        let text = if i < num_queries {
            format!("k{i} pa{i} pb{i} pc{i} pd{i} pe{i} pf{i} pg{i} ph{i}")
        } else {
            format!("xa{i} xb{i} xc{i} xd{i} xe{i} xf{i} xg{i} xh{i} xi{i}")
        };
        corpus.push(Document::new(format!("d{i:05}"), text));
    }
    let mut queries = Vec::with_capacity(num_queries);
    let mut qrels = QrelsSet::new();
    let mut instances = Vec::with_capacity(num_queries);
    for i in 0..num_queries {
        let qid = format!("q{i:05}");
        let text = format!("k{i} qa{i} qb{i} qc{i} qd{i} qe{i} qf{i} qg{i} qh{i}");
        queries.push(Query::new(qid.clone(), text.clone()));
        qrels.insert(qid.clone(), format!("d{i:05}"), 1);
        let mut negatives = Vec::with_capacity(negatives_per_instance);
        while negatives.len() < negatives_per_instance {
            let j = range(&mut r, num_docs);
            if j == i {
                continue;
            }
            let doc_id = format!("d{j:05}");
            if negatives.iter().any(|n: &ScoredDoc| n.doc_id == doc_id) {
                continue;
            }
            negatives.push(ScoredDoc {
                doc_id,
                text: corpus[j].text.clone(),
                score: 1.0,
            });
        }
        instances.push(TrainingInstance {
            query_id: qid,
            query_text: text,
            positive: PositiveDoc {
                doc_id: format!("d{i:05}"),
                text: corpus[i].text.clone(),
            },
            negatives,
            source: "other".to_string(),
            positive_rank: Some(1),
            positive_score: Some(10.0),
        });
    }
    (
        instances,
        TrainEvalSet {
            queries,
            corpus,
            qrels,
        },
    )
}
