//! Synthetic workload generators shared by the benchmarks.

use rand_chacha::rand_core::Rng as _;
use rand_chacha::ChaCha8Rng;

use retkit_core::corpus::{Document, QrelsSet, Query, RankedRun, RunEntry};
use retkit_core::dense::VectorStore;
use retkit_core::mixture::seeded_rng;

fn pick(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    (rng.next_u64() % bound as u64) as usize
}

pub fn synthetic_corpus(num_docs: usize, vocab: usize, doc_len: usize, seed: u64) -> Vec<Document> {
    let mut rng = seeded_rng(seed);
    (0..num_docs)
        .map(|i| {
            let words: Vec<String> = (0..doc_len)
                .map(|_| format!("t{}", pick(&mut rng, vocab)))
                .collect();
            Document::new(format!("d{i:06}"), words.join(" "))
        })
        .collect()
}

pub fn synthetic_queries(num_queries: usize, vocab: usize, terms: usize, seed: u64) -> Vec<Query> {
    let mut rng = seeded_rng(seed);
    (0..num_queries)
        .map(|i| {
            let words: Vec<String> = (0..terms)
                .map(|_| format!("t{}", pick(&mut rng, vocab)))
                .collect();
            Query::new(format!("q{i:05}"), words.join(" "))
        })
        .collect()
}

pub fn synthetic_vectors(rows: usize, dim: usize, seed: u64) -> VectorStore {
    let mut rng = seeded_rng(seed);
    let data: Vec<(String, Vec<f32>)> = (0..rows)
        .map(|i| {
            let v: Vec<f32> = (0..dim)
                .map(|_| ((rng.next_u64() >> 40) as f32 / (1u64 << 24) as f32) - 0.5)
                .collect();
            (format!("d{i:06}"), v)
        })
        .collect();
    VectorStore::from_rows(data, Some(dim)).expect("consistent synthetic vectors")
}

/// A run plus qrels pair sized for metric benchmarks.
pub fn synthetic_run_and_qrels(
    num_queries: usize,
    depth: usize,
    pool: usize,
    seed: u64,
) -> (RankedRun, QrelsSet) {
    let mut rng = seeded_rng(seed);
    let mut run = RankedRun::new("bench");
    let mut qrels = QrelsSet::new();
    for q in 0..num_queries {
        let qid = format!("q{q:05}");
        let mut entries = Vec::with_capacity(depth);
        for _ in 0..depth {
            let doc = pick(&mut rng, pool);
            let doc_id = format!("d{doc:06}");
            if entries.iter().any(|e: &RunEntry| e.doc_id == doc_id) {
                continue;
            }
            entries.push(RunEntry::new(doc_id, (rng.next_u64() % 100_000) as f64 / 100.0));
        }
        run.insert_query(qid.clone(), entries).expect("unique entries");
        for _ in 0..3 {
            let doc = pick(&mut rng, pool);
            qrels.insert(qid.clone(), format!("d{doc:06}"), 1 + (pick(&mut rng, 2) as u32));
        }
    }
    (run, qrels)
}
