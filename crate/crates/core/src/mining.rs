//! Hard-negative mining from first-stage runs.
//!
//! For every judged positive of a query, the top of the run (minus all
//! positives) passes through a statistical score cutoff, and what
//! survives becomes the instance's explicit hard negatives. A hygiene
//! pass drops too-short queries and query texts paired with conflicting
//! positives.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bm25::tokenize;
use crate::corpus::{Document, Query, QrelsSet, RankedRun};
use crate::error::{Error, Result};

/// Statistical cutoff over first-stage scores. Candidates must arrive
/// sorted by score descending with positives already removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum CutoffStrategy {
    /// Keep scores >= the arithmetic mean of the candidate scores.
    Mean,
    /// Keep scores >= mean + alpha * population standard deviation.
    MeanPlusStd { alpha: f64 },
    /// Keep scores >= tau * the maximum candidate score.
    TopFraction { tau: f64 },
}

impl CutoffStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CutoffStrategy::Mean => Ok(()),
            CutoffStrategy::MeanPlusStd { alpha } => {
                if alpha >= 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("alpha must be >= 0, got {alpha}")))
                }
            }
            CutoffStrategy::TopFraction { tau } => {
                if tau > 0.0 && tau <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("tau must be in (0, 1], got {tau}")))
                }
            }
        }
    }
}

impl std::str::FromStr for CutoffStrategy {
    type Err = String;

    /// Accepts `mean`, `mean_plus_std:<alpha>`, and `top_fraction:<tau>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "mean" {
            return Ok(CutoffStrategy::Mean);
        }
        if let Some(alpha) = s.strip_prefix("mean_plus_std:") {
            let alpha: f64 = alpha.parse().map_err(|_| format!("bad alpha in `{s}`"))?;
            return Ok(CutoffStrategy::MeanPlusStd { alpha });
        }
        if let Some(tau) = s.strip_prefix("top_fraction:") {
            let tau: f64 = tau.parse().map_err(|_| format!("bad tau in `{s}`"))?;
            return Ok(CutoffStrategy::TopFraction { tau });
        }
        Err(format!(
            "unknown cutoff `{s}` (expected mean, mean_plus_std:<alpha>, or top_fraction:<tau>)"
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub cutoff: CutoffStrategy,
    /// Hard cap on negatives kept per instance.
    pub max_negatives: usize,
    /// Instances with fewer negatives than this are skipped.
    pub min_negatives: usize,
    /// How deep into the run candidates are read.
    pub candidate_depth: usize,
    /// Hygiene: queries with fewer tokens than this are dropped.
    pub min_query_tokens: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            cutoff: CutoffStrategy::Mean,
            max_negatives: 20,
            min_negatives: 1,
            candidate_depth: 100,
            min_query_tokens: 4,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        self.cutoff.validate()?;
        if self.max_negatives < 1 {
            return Err(Error::InvalidConfig("max_negatives must be >= 1".to_string()));
        }
        if self.min_negatives > self.max_negatives {
            return Err(Error::InvalidConfig(
                "min_negatives must be <= max_negatives".to_string(),
            ));
        }
        if self.candidate_depth < 1 {
            return Err(Error::InvalidConfig("candidate_depth must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveDoc {
    pub doc_id: String,
    pub text: String,
}

/// A negative candidate with the first-stage score it carried in the
/// run, kept for later margin analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub text: String,
    pub score: f64,
}

/// One unit of contrastive supervision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub query_id: String,
    pub query_text: String,
    pub positive: PositiveDoc,
    pub negatives: Vec<ScoredDoc>,
    /// Source tag, e.g. jua-juris, ulysses, ulysses-synth, squad-pt, other.
    pub source: String,
    /// Rank of the positive within the first-stage run, when recovered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_rank: Option<usize>,
    /// First-stage score of the positive, when recovered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_score: Option<f64>,
}

/// Apply the statistical cutoff, preserving order. An empty candidate
/// list stays empty rather than erroring.
pub fn apply_cutoff(candidates: Vec<ScoredDoc>, strategy: CutoffStrategy) -> Vec<ScoredDoc> {
    let Some(threshold) = cutoff_threshold(
        &candidates.iter().map(|c| c.score).collect::<Vec<_>>(),
        strategy,
    ) else {
        return Vec::new();
    };
    candidates.into_iter().filter(|c| c.score >= threshold).collect()
}

/// The score threshold a strategy implies for a candidate score list;
/// `None` when the list is empty.
pub fn cutoff_threshold(scores: &[f64], strategy: CutoffStrategy) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    Some(match strategy {
        CutoffStrategy::Mean => mean,
        CutoffStrategy::MeanPlusStd { alpha } => {
            let variance = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            mean + alpha * variance.sqrt()
        }
        CutoffStrategy::TopFraction { tau } => {
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            tau * max
        }
    })
}

/// Why a (query, positive) pair produced no instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    QueryMissingFromRun,
    NoNegatives,
    TooFewNegatives,
    NoPositive,
    ShortQuery,
    AmbiguousQuery,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::QueryMissingFromRun => "query_missing_from_run",
            SkipReason::NoNegatives => "no_negatives",
            SkipReason::TooFewNegatives => "too_few_negatives",
            SkipReason::NoPositive => "no_positive",
            SkipReason::ShortQuery => "short_query",
            SkipReason::AmbiguousQuery => "ambiguous_query",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedQuery {
    pub query_id: String,
    pub reason: SkipReason,
}

/// Mine instances for one query: one instance per positive (grade >= 1),
/// negatives drawn from the top `candidate_depth` of the run minus all
/// positives, cut statistically and truncated to `max_negatives`.
pub fn mine_negatives(
    query: &Query,
    run_ranking: Option<&[crate::corpus::RunEntry]>,
    qrels_for_query: Option<&BTreeMap<String, u32>>,
    corpus: &HashMap<&str, &Document>,
    config: &MiningConfig,
    source: &str,
) -> Result<(Vec<TrainingInstance>, Vec<SkippedQuery>)> {
    config.validate()?;
    let mut instances = Vec::new();
    let mut skipped = Vec::new();

    let positives: Vec<&str> = qrels_for_query
        .map(|j| {
            j.iter()
                .filter(|(_, &g)| g >= 1)
                .map(|(d, _)| d.as_str())
                .collect()
        })
        .unwrap_or_default();
    if positives.is_empty() {
        skipped.push(SkippedQuery {
            query_id: query.query_id.clone(),
            reason: SkipReason::NoPositive,
        });
        return Ok((instances, skipped));
    }
    let Some(ranking) = run_ranking else {
        skipped.push(SkippedQuery {
            query_id: query.query_id.clone(),
            reason: SkipReason::QueryMissingFromRun,
        });
        return Ok((instances, skipped));
    };

    let positive_set: HashSet<&str> = positives.iter().copied().collect();
    let candidates: Vec<ScoredDoc> = ranking
        .iter()
        .take(config.candidate_depth)
        .filter(|e| !positive_set.contains(e.doc_id.as_str()))
        .map(|e| {
            let doc = corpus
                .get(e.doc_id.as_str())
                .ok_or_else(|| Error::UnknownDocId(e.doc_id.clone()))?;
            Ok(ScoredDoc {
                doc_id: e.doc_id.clone(),
                text: doc.indexing_text(),
                score: e.score,
            })
        })
        .collect::<Result<_>>()?;

    let mut negatives = apply_cutoff(candidates, config.cutoff);
    negatives.truncate(config.max_negatives);

    for positive_id in positives {
        let doc = corpus
            .get(positive_id)
            .ok_or_else(|| Error::UnknownDocId(positive_id.to_string()))?;
        if negatives.len() < config.min_negatives {
            skipped.push(SkippedQuery {
                query_id: query.query_id.clone(),
                reason: if negatives.is_empty() {
                    SkipReason::NoNegatives
                } else {
                    SkipReason::TooFewNegatives
                },
            });
            continue;
        }
        let positive_rank = ranking
            .iter()
            .position(|e| e.doc_id == positive_id)
            .map(|p| p + 1);
        let positive_score = positive_rank.map(|r| ranking[r - 1].score);
        instances.push(TrainingInstance {
            query_id: query.query_id.clone(),
            query_text: query.text.clone(),
            positive: PositiveDoc {
                doc_id: positive_id.to_string(),
                text: doc.indexing_text(),
            },
            negatives: negatives.clone(),
            source: source.to_string(),
            positive_rank,
            positive_score,
        });
    }
    Ok((instances, skipped))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MiningReport {
    pub queries_seen: usize,
    pub instances_emitted: usize,
    pub skipped: BTreeMap<String, usize>,
    pub source: String,
}

impl MiningReport {
    fn count_skip(&mut self, reason: &SkipReason) {
        *self.skipped.entry(reason.as_str().to_string()).or_insert(0) += 1;
    }
}

/// Mine a whole run in input query order.
pub fn mine_run(
    queries: &[Query],
    run: &RankedRun,
    qrels: &QrelsSet,
    corpus: &[Document],
    config: &MiningConfig,
    source: &str,
) -> Result<(Vec<TrainingInstance>, MiningReport)> {
    let corpus_map: HashMap<&str, &Document> =
        corpus.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut report = MiningReport {
        source: source.to_string(),
        ..Default::default()
    };
    let mut instances = Vec::new();
    for query in queries {
        report.queries_seen += 1;
        let (mined, skipped) = mine_negatives(
            query,
            run.ranking(&query.query_id),
            qrels.for_query(&query.query_id),
            &corpus_map,
            config,
            source,
        )?;
        for s in &skipped {
            log::warn!("mining skipped query {}: {}", s.query_id, s.reason.as_str());
            report.count_skip(&s.reason);
        }
        report.instances_emitted += mined.len();
        instances.extend(mined);
    }
    Ok((instances, report))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HygieneReport {
    pub kept: usize,
    pub dropped_short: usize,
    pub dropped_ambiguous: usize,
}

/// Query hygiene: drop instances whose query has fewer than
/// `min_query_tokens` tokens, and drop every instance of a query text
/// that appears with two or more distinct positives.
pub fn filter_short_queries(
    instances: Vec<TrainingInstance>,
    config: &MiningConfig,
) -> (Vec<TrainingInstance>, Vec<SkippedQuery>, HygieneReport) {
    let mut positives_by_text: HashMap<&str, HashSet<&str>> = HashMap::new();
    for inst in &instances {
        positives_by_text
            .entry(inst.query_text.as_str())
            .or_default()
            .insert(inst.positive.doc_id.as_str());
    }
    let ambiguous: HashSet<String> = positives_by_text
        .iter()
        .filter(|(_, positives)| positives.len() >= 2)
        .map(|(text, _)| text.to_string())
        .collect();

    let mut kept = Vec::with_capacity(instances.len());
    let mut dropped = Vec::new();
    let mut report = HygieneReport::default();
    for inst in instances {
        if tokenize(&inst.query_text).len() < config.min_query_tokens {
            report.dropped_short += 1;
            dropped.push(SkippedQuery {
                query_id: inst.query_id,
                reason: SkipReason::ShortQuery,
            });
        } else if ambiguous.contains(&inst.query_text) {
            report.dropped_ambiguous += 1;
            dropped.push(SkippedQuery {
                query_id: inst.query_id,
                reason: SkipReason::AmbiguousQuery,
            });
        } else {
            kept.push(inst);
        }
    }
    report.kept = kept.len();
    (kept, dropped, report)
}

/// Read training instances from JSON-lines.
pub fn read_instances(path: &Path) -> Result<Vec<TrainingInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut instances = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: TrainingInstance = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, format!("bad training instance: {e}")))?;
        instances.push(inst);
    }
    Ok(instances)
}

/// Write training instances as JSON-lines. Serialization is
/// deterministic, so identical inputs produce identical bytes.
pub fn write_instances(instances: &[TrainingInstance], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, inst).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serialize instances to an in-memory JSONL byte buffer (used by
/// determinism checks).
pub fn instances_to_bytes(instances: &[TrainingInstance]) -> Vec<u8> {
    let mut out = Vec::new();
    for inst in instances {
        serde_json::to_writer(&mut out, inst).expect("instance serialization");
        out.push(b'\n');
    }
    out
}
