//! Recoverability filtering and priority ranking over mined instances.
//!
//! An instance survives only if its positive is recovered by the
//! first-stage run within a rank bound. Survivors are ordered by a
//! weighted composite of rank, score margin, and negative-pool size,
//! then truncated to the requested budget.

use serde::{Deserialize, Serialize};

use crate::corpus::RankedRun;
use crate::error::{Error, Result};
use crate::mining::TrainingInstance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityWeights {
    pub w_rank: f64,
    pub w_margin: f64,
    pub w_pool: f64,
    /// Recoverability bound: positives ranked deeper than this, or not
    /// retrieved at all, are dropped.
    pub top_rank: usize,
    /// Negative-pool size at which the pool term saturates to 1.
    pub pool_cap: usize,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        PriorityWeights {
            w_rank: 0.4,
            w_margin: 0.4,
            w_pool: 0.2,
            top_rank: 100,
            pool_cap: 20,
        }
    }
}

impl PriorityWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_rank", self.w_rank),
            ("w_margin", self.w_margin),
            ("w_pool", self.w_pool),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {w}")));
            }
        }
        let sum = self.w_rank + self.w_margin + self.w_pool;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "priority weights must sum to 1, got {sum}"
            )));
        }
        if self.top_rank < 1 {
            return Err(Error::InvalidConfig("top_rank must be >= 1".to_string()));
        }
        if self.pool_cap < 1 {
            return Err(Error::InvalidConfig("pool_cap must be >= 1".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision")]
pub enum RecoverDecision {
    /// Positive found at rank <= top_rank; the observed rank and score
    /// are attached to the instance.
    Keep { rank: usize, score: f64 },
    Drop { reason: DropReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    QueryMissingFromRun,
    BeyondTopRank,
}

/// Keep iff the instance's positive appears at rank <= `top_rank` in
/// the run for its query.
pub fn recoverability_filter(
    instance: &TrainingInstance,
    run: &RankedRun,
    top_rank: usize,
) -> RecoverDecision {
    let Some(ranking) = run.ranking(&instance.query_id) else {
        return RecoverDecision::Drop {
            reason: DropReason::QueryMissingFromRun,
        };
    };
    match ranking
        .iter()
        .position(|e| e.doc_id == instance.positive.doc_id)
    {
        Some(pos) if pos < top_rank => RecoverDecision::Keep {
            rank: pos + 1,
            score: ranking[pos].score,
        },
        _ => RecoverDecision::Drop {
            reason: DropReason::BeyondTopRank,
        },
    }
}

fn squash_to_unit(x: f64) -> f64 {
    // x/(1+|x|) in (-1, 1), shifted to (0, 1)
    (x / (1.0 + x.abs()) + 1.0) / 2.0
}

/// Composite priority in [0, 1]:
/// `w_rank/positive_rank + w_margin * squash(margin) + w_pool * min(pool/cap, 1)`
/// where margin is the positive's first-stage score minus the best
/// negative score. An empty negative pool has no competitor, so its
/// margin term is 1 and its pool term 0.
pub fn priority_score(instance: &TrainingInstance, weights: &PriorityWeights) -> Result<f64> {
    weights.validate()?;
    let rank = instance.positive_rank.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "instance for query `{}` carries no positive_rank; run recoverability_filter first",
            instance.query_id
        ))
    })?;
    let positive_score = instance.positive_score.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "instance for query `{}` carries no positive_score",
            instance.query_id
        ))
    })?;
    let rank_term = 1.0 / rank as f64;
    let margin_term = match instance
        .negatives
        .iter()
        .map(|n| n.score)
        .fold(None::<f64>, |best, s| Some(best.map_or(s, |b| b.max(s))))
    {
        Some(best_negative) => squash_to_unit(positive_score - best_negative),
        None => 1.0,
    };
    let pool_term = (instance.negatives.len() as f64 / weights.pool_cap as f64).min(1.0);
    Ok(weights.w_rank * rank_term + weights.w_margin * margin_term + weights.w_pool * pool_term)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterManifest {
    pub input_count: usize,
    pub recovered: usize,
    pub dropped_missing_query: usize,
    pub dropped_beyond_top_rank: usize,
    pub selected: usize,
    pub requested: Option<usize>,
    pub weights: PriorityWeights,
}

/// Sort recovered instances by (priority desc, query_id asc, positive
/// doc_id asc) and keep the top `n`. Requesting more than available
/// keeps everything and warns.
pub fn select_top(
    instances: Vec<TrainingInstance>,
    n: Option<usize>,
    weights: &PriorityWeights,
) -> Result<Vec<TrainingInstance>> {
    if let Some(n) = n {
        if n < 1 {
            return Err(Error::InvalidConfig("selection size must be >= 1".to_string()));
        }
        if n > instances.len() {
            log::warn!(
                "requested {n} instances but only {} are available; keeping all",
                instances.len()
            );
        }
    }
    let mut scored: Vec<(f64, TrainingInstance)> = instances
        .into_iter()
        .map(|inst| Ok((priority_score(&inst, weights)?, inst)))
        .collect::<Result<_>>()?;
    scored.sort_by(|(pa, a), (pb, b)| {
        pb.partial_cmp(pa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.query_id.cmp(&b.query_id))
            .then_with(|| a.positive.doc_id.cmp(&b.positive.doc_id))
    });
    let mut selected: Vec<TrainingInstance> = scored.into_iter().map(|(_, i)| i).collect();
    if let Some(n) = n {
        selected.truncate(n);
    }
    Ok(selected)
}

/// Full filter pipeline: recoverability gate, then priority selection.
pub fn filter_instances(
    instances: Vec<TrainingInstance>,
    run: &RankedRun,
    weights: &PriorityWeights,
    select_n: Option<usize>,
) -> Result<(Vec<TrainingInstance>, FilterManifest)> {
    weights.validate()?;
    let input_count = instances.len();
    let mut recovered = Vec::with_capacity(instances.len());
    let mut dropped_missing_query = 0;
    let mut dropped_beyond_top_rank = 0;
    for mut inst in instances {
        match recoverability_filter(&inst, run, weights.top_rank) {
            RecoverDecision::Keep { rank, score } => {
                inst.positive_rank = Some(rank);
                inst.positive_score = Some(score);
                recovered.push(inst);
            }
            RecoverDecision::Drop { reason } => match reason {
                DropReason::QueryMissingFromRun => dropped_missing_query += 1,
                DropReason::BeyondTopRank => dropped_beyond_top_rank += 1,
            },
        }
    }
    let recovered_count = recovered.len();
    let selected = select_top(recovered, select_n, weights)?;
    let manifest = FilterManifest {
        input_count,
        recovered: recovered_count,
        dropped_missing_query,
        dropped_beyond_top_rank,
        selected: selected.len(),
        requested: select_n,
        weights: *weights,
    };
    Ok((selected, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{RankedRun, RunEntry};
    use crate::mining::{PositiveDoc, ScoredDoc};

    fn instance(query_id: &str, positive: &str, negatives: usize) -> TrainingInstance {
        TrainingInstance {
            query_id: query_id.to_string(),
            query_text: "texto".to_string(),
            positive: PositiveDoc {
                doc_id: positive.to_string(),
                text: "p".to_string(),
            },
            negatives: (0..negatives)
                .map(|i| ScoredDoc {
                    doc_id: format!("n{i}"),
                    text: "n".to_string(),
                    score: i as f64,
                })
                .collect(),
            source: "other".to_string(),
            positive_rank: None,
            positive_score: None,
        }
    }

    fn run_with(qid: &str, entries: Vec<RunEntry>) -> RankedRun {
        let mut run = RankedRun::new("t");
        run.insert_query(qid, entries).unwrap();
        run
    }

    #[test]
    fn recover_keeps_rank_one() {
        let run = run_with("q1", vec![RunEntry::new("pos", 5.0)]);
        let inst = instance("q1", "pos", 0);
        assert_eq!(
            recoverability_filter(&inst, &run, 100),
            RecoverDecision::Keep { rank: 1, score: 5.0 }
        );
    }

    #[test]
    fn recover_drops_beyond_bound_and_missing_query() {
        let run = run_with(
            "q1",
            vec![RunEntry::new("a", 5.0), RunEntry::new("pos", 4.0)],
        );
        let inst = instance("q1", "pos", 0);
        assert_eq!(
            recoverability_filter(&inst, &run, 1),
            RecoverDecision::Drop {
                reason: DropReason::BeyondTopRank
            }
        );
        let other = instance("q2", "pos", 0);
        assert_eq!(
            recoverability_filter(&other, &run, 1),
            RecoverDecision::Drop {
                reason: DropReason::QueryMissingFromRun
            }
        );
    }

    #[test]
    fn recover_drops_unretrieved_positive() {
        let run = run_with("q1", vec![RunEntry::new("a", 5.0)]);
        let inst = instance("q1", "pos", 0);
        assert_eq!(
            recoverability_filter(&inst, &run, 100),
            RecoverDecision::Drop {
                reason: DropReason::BeyondTopRank
            }
        );
    }

    // rank 1, margin 9 -> squash = (0.9+1)/2 = 0.95, pool 20/20 = 1
    // 0.4*1 + 0.4*0.95 + 0.2*1 = 0.98
    #[test]
    fn priority_worked_example() {
        let mut inst = instance("q1", "pos", 20);
        inst.positive_rank = Some(1);
        inst.positive_score = Some(9.0);
        for n in &mut inst.negatives {
            n.score = 0.0;
        }
        let p = priority_score(&inst, &PriorityWeights::default()).unwrap();
        assert!((p - 0.98).abs() < 1e-12, "priority = {p}");
    }

    #[test]
    fn priority_empty_pool_margin_convention() {
        // deep rank, empty pool: 0.4*~0 + 0.4*1 + 0.2*0 -> 0.4 in the limit
        let mut inst = instance("q1", "pos", 0);
        inst.positive_rank = Some(1_000_000);
        inst.positive_score = Some(0.0);
        let p = priority_score(&inst, &PriorityWeights::default()).unwrap();
        assert!((p - 0.4).abs() < 1e-5, "priority = {p}");
    }

    #[test]
    fn priority_dominance() {
        let weights = PriorityWeights::default();
        let mut better = instance("q1", "pos", 10);
        better.positive_rank = Some(1);
        better.positive_score = Some(9.0);
        let mut worse = instance("q2", "pos", 5);
        worse.positive_rank = Some(2);
        worse.positive_score = Some(5.0);
        for n in better.negatives.iter_mut().chain(worse.negatives.iter_mut()) {
            n.score = 1.0;
        }
        let pb = priority_score(&better, &weights).unwrap();
        let pw = priority_score(&worse, &weights).unwrap();
        assert!(pb > pw);
    }

    #[test]
    fn priority_requires_rank() {
        let inst = instance("q1", "pos", 0);
        assert!(priority_score(&inst, &PriorityWeights::default()).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let weights = PriorityWeights {
            w_rank: 0.5,
            w_margin: 0.5,
            w_pool: 0.5,
            ..Default::default()
        };
        assert!(weights.validate().is_err());
    }

    fn recovered(query_id: &str, rank: usize) -> TrainingInstance {
        let mut inst = instance(query_id, "pos", 1);
        inst.positive_rank = Some(rank);
        inst.positive_score = Some(10.0);
        inst.negatives[0].score = 1.0;
        inst
    }

    #[test]
    fn select_top_orders_by_priority_then_query_id() {
        let weights = PriorityWeights::default();
        let selected = select_top(
            vec![recovered("qb", 1), recovered("qc", 5), recovered("qa", 1)],
            Some(2),
            &weights,
        )
        .unwrap();
        let ids: Vec<&str> = selected.iter().map(|i| i.query_id.as_str()).collect();
        assert_eq!(ids, vec!["qa", "qb"]);
    }

    #[test]
    fn select_top_more_than_available_keeps_all() {
        let weights = PriorityWeights::default();
        let selected = select_top(vec![recovered("qa", 1)], Some(10), &weights).unwrap();
        assert_eq!(selected.len(), 1);
    }

    #[test]
    fn manifest_records_selection_counts_and_weights() {
        let run = run_with(
            "q1",
            vec![RunEntry::new("pos", 5.0), RunEntry::new("n0", 4.0)],
        );
        let weights = PriorityWeights::default();
        let (kept, manifest) =
            filter_instances(vec![instance("q1", "pos", 1)], &run, &weights, Some(1)).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(manifest.input_count, 1);
        assert_eq!(manifest.recovered, 1);
        assert_eq!(manifest.selected, 1);
        assert_eq!(manifest.requested, Some(1));
        assert_eq!(manifest.weights, weights);
    }

    #[test]
    fn filter_then_select_is_idempotent() {
        let run = run_with(
            "q1",
            vec![RunEntry::new("pos", 5.0), RunEntry::new("n0", 4.0)],
        );
        let mut run2 = run;
        run2.insert_query(
            "q2",
            vec![RunEntry::new("n0", 9.0), RunEntry::new("pos", 2.0)],
        )
        .unwrap();
        let instances = vec![instance("q1", "pos", 1), instance("q2", "pos", 1)];
        let weights = PriorityWeights::default();
        let (first, m1) = filter_instances(instances, &run2, &weights, Some(2)).unwrap();
        assert_eq!(m1.recovered, 2);
        let (second, _) = filter_instances(first.clone(), &run2, &weights, Some(2)).unwrap();
        assert_eq!(first, second);
    }
}
