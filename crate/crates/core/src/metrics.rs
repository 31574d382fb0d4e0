//! Truncated ranking metrics: NDCG@k, MRR@k, MAP@k, plus per-dataset
//! means and cross-dataset aggregation.
//!
//! Defaults follow the trec_eval conventions: linear NDCG gain, MAP
//! divided by the full number of relevant documents, relevance
//! threshold 1 for MRR/MAP. All of these are configurable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{QrelsSet, RankedRun};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gain {
    Linear,
    Exponential,
}

impl std::str::FromStr for Gain {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Gain::Linear),
            "exp" | "exponential" => Ok(Gain::Exponential),
            other => Err(format!("unknown gain `{other}` (expected linear or exp)")),
        }
    }
}

/// Denominator convention for truncated average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapDenominator {
    /// Divide by all relevant documents for the query (trec_eval cut-map).
    TotalRelevant,
    /// Divide by min(R, k).
    CappedAtK,
}

impl std::str::FromStr for MapDenominator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "full" | "total" => Ok(MapDenominator::TotalRelevant),
            "capped" => Ok(MapDenominator::CappedAtK),
            other => Err(format!("unknown map denominator `{other}` (expected full or capped)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    /// Evaluation cutoff; every metric is truncated to the top k.
    pub k: usize,
    pub gain: Gain,
    /// Grade at or above which a document counts as relevant for MRR/MAP.
    pub rel_threshold: u32,
    pub map_denominator: MapDenominator,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec {
            k: 10,
            gain: Gain::Linear,
            rel_threshold: 1,
            map_denominator: MapDenominator::TotalRelevant,
        }
    }
}

impl MetricSpec {
    pub fn with_k(k: usize) -> Self {
        MetricSpec { k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("metric cutoff k must be >= 1".to_string()));
        }
        if self.rel_threshold < 1 {
            return Err(Error::InvalidConfig("rel_threshold must be >= 1".to_string()));
        }
        Ok(())
    }

    fn gain_of(&self, grade: u32) -> f64 {
        match self.gain {
            Gain::Linear => grade as f64,
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

/// The three reported metrics for one query, dataset, or aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub ndcg: f64,
    pub mrr: f64,
    pub map: f64,
}

/// NDCG@k with configurable gain. The ideal DCG sorts the query's
/// judged grades descending; queries with zero total gain return 0.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranking: &[S],
    qrels_for_query: &BTreeMap<String, u32>,
    spec: &MetricSpec,
) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(spec.k)
        .enumerate()
        .map(|(i, doc)| {
            let grade = qrels_for_query.get(doc.as_ref()).copied().unwrap_or(0);
            spec.gain_of(grade) / ((i + 2) as f64).log2()
        })
        .sum();
    let mut grades: Vec<u32> = qrels_for_query.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(spec.k)
        .enumerate()
        .map(|(i, &g)| spec.gain_of(g) / ((i + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Reciprocal rank of the first document at or above the relevance
/// threshold within the top k; 0 when none appears.
pub fn mrr_at_k<S: AsRef<str>>(
    ranking: &[S],
    qrels_for_query: &BTreeMap<String, u32>,
    spec: &MetricSpec,
) -> f64 {
    for (i, doc) in ranking.iter().take(spec.k).enumerate() {
        if qrels_for_query.get(doc.as_ref()).copied().unwrap_or(0) >= spec.rel_threshold {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

/// Truncated average precision. With the default denominator this is
/// `sum(P@i over relevant i <= k) / R` where R counts every relevant
/// document judged for the query; 0 when R = 0.
pub fn map_at_k<S: AsRef<str>>(
    ranking: &[S],
    qrels_for_query: &BTreeMap<String, u32>,
    spec: &MetricSpec,
) -> f64 {
    let total_relevant = qrels_for_query
        .values()
        .filter(|&&g| g >= spec.rel_threshold)
        .count();
    if total_relevant == 0 {
        return 0.0;
    }
    let denominator = match spec.map_denominator {
        MapDenominator::TotalRelevant => total_relevant,
        MapDenominator::CappedAtK => total_relevant.min(spec.k),
    };
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, doc) in ranking.iter().take(spec.k).enumerate() {
        if qrels_for_query.get(doc.as_ref()).copied().unwrap_or(0) >= spec.rel_threshold {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    precision_sum / denominator as f64
}

/// Per-query metrics and their mean for one run over one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub per_query: BTreeMap<String, MetricTriple>,
    pub mean: MetricTriple,
    pub query_count: usize,
}

/// Evaluate a run against qrels. Evaluation covers exactly the queries
/// present in the qrels; a qrels query missing from the run scores 0 on
/// every metric. Empty qrels are an error.
pub fn evaluate_run(run: &RankedRun, qrels: &QrelsSet, spec: &MetricSpec) -> Result<DatasetReport> {
    spec.validate()?;
    if qrels.is_empty() {
        return Err(Error::EmptyQrels);
    }
    let empty: &[crate::corpus::RunEntry] = &[];
    let mut per_query = BTreeMap::new();
    let mut sum = MetricTriple::default();
    for qid in qrels.query_ids() {
        let judged = qrels.for_query(qid).expect("query listed in qrels");
        let ranking: Vec<&str> = run
            .ranking(qid)
            .unwrap_or(empty)
            .iter()
            .map(|e| e.doc_id.as_str())
            .collect();
        let triple = MetricTriple {
            ndcg: ndcg_at_k(&ranking, judged, spec),
            mrr: mrr_at_k(&ranking, judged, spec),
            map: map_at_k(&ranking, judged, spec),
        };
        sum.ndcg += triple.ndcg;
        sum.mrr += triple.mrr;
        sum.map += triple.map;
        per_query.insert(qid.to_string(), triple);
    }
    let n = per_query.len() as f64;
    Ok(DatasetReport {
        mean: MetricTriple {
            ndcg: sum.ndcg / n,
            mrr: sum.mrr / n,
            map: sum.map / n,
        },
        query_count: per_query.len(),
        per_query,
    })
}

/// Unweighted arithmetic mean over datasets, optionally restricted to a
/// named subset. Unknown dataset names and empty selections are errors.
/// Rounding happens only at display time.
pub fn aggregate_datasets(
    per_dataset: &BTreeMap<String, f64>,
    subset: Option<&[String]>,
) -> Result<f64> {
    let values: Vec<f64> = match subset {
        None => per_dataset.values().copied().collect(),
        Some(names) => {
            let mut selected = Vec::with_capacity(names.len());
            for name in names {
                let v = per_dataset
                    .get(name)
                    .ok_or_else(|| Error::UnknownDataset(name.clone()))?;
                selected.push(*v);
            }
            selected
        }
    };
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty dataset selection".to_string()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RunEntry;

    fn qrels_map(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_perfect_single_doc() {
        let spec = MetricSpec::default();
        assert_eq!(ndcg_at_k(&["d1"], &qrels_map(&[("d1", 1)]), &spec), 1.0);
    }

    // dcg = 1/log2(2) + 3/log2(3) = 2.8927892607143724
    // idcg = 3/log2(2) + 1/log2(3) = 3.6309297535714578
    // ndcg = 0.7967075809905066 (independent scalar evaluation)
    #[test]
    fn ndcg_worked_example_linear_gain() {
        let spec = MetricSpec::default();
        let got = ndcg_at_k(&["d2", "d1"], &qrels_map(&[("d1", 3), ("d2", 1)]), &spec);
        assert!((got - 0.7967075809905066).abs() < 1e-12, "ndcg = {got}");
    }

    #[test]
    fn ndcg_relevant_below_cutoff_is_zero() {
        let spec = MetricSpec::default();
        let mut ranking: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        ranking.push("d1".to_string());
        assert_eq!(ndcg_at_k(&ranking, &qrels_map(&[("d1", 1)]), &spec), 0.0);
    }

    #[test]
    fn ndcg_zero_gain_query_is_zero() {
        let spec = MetricSpec::default();
        assert_eq!(ndcg_at_k(&["d1"], &qrels_map(&[("d1", 0)]), &spec), 0.0);
        assert_eq!(ndcg_at_k(&["d1"], &BTreeMap::new(), &spec), 0.0);
    }

    #[test]
    fn ndcg_exponential_gain() {
        let spec = MetricSpec {
            gain: Gain::Exponential,
            ..Default::default()
        };
        // gains: 2^3-1 = 7 at rank 2, 2^1-1 = 1 at rank 1
        let got = ndcg_at_k(&["d2", "d1"], &qrels_map(&[("d1", 3), ("d2", 1)]), &spec);
        let dcg = 1.0 + 7.0 / 3f64.log2();
        let idcg = 7.0 + 1.0 / 3f64.log2();
        assert!((got - dcg / idcg).abs() < 1e-12);
    }

    #[test]
    fn mrr_examples() {
        let spec = MetricSpec::default();
        assert_eq!(mrr_at_k(&["d1"], &qrels_map(&[("d1", 1)]), &spec), 1.0);
        let ranking = ["x1", "x2", "x3", "d1"];
        assert_eq!(mrr_at_k(&ranking, &qrels_map(&[("d1", 1)]), &spec), 0.25);
        let ranking: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        assert_eq!(mrr_at_k(&ranking, &qrels_map(&[("d1", 1)]), &spec), 0.0);
    }

    #[test]
    fn map_worked_example() {
        let spec = MetricSpec::default();
        // AP = (1/2)(1/1 + 2/3) = 0.8333333333333333
        let ranking = ["d1", "x", "d2"];
        let got = map_at_k(&ranking, &qrels_map(&[("d1", 1), ("d2", 1)]), &spec);
        assert!((got - 0.8333333333333333).abs() < 1e-12);
    }

    #[test]
    fn map_perfect_prefix_is_one() {
        let spec = MetricSpec::default();
        let ranking = ["d1", "d2", "d3"];
        let qrels = qrels_map(&[("d1", 1), ("d2", 1), ("d3", 1)]);
        assert!((map_at_k(&ranking, &qrels, &spec) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_no_relevant_retrieved_is_zero() {
        let spec = MetricSpec::default();
        let ranking = ["x1", "x2"];
        assert_eq!(map_at_k(&ranking, &qrels_map(&[("d1", 1)]), &spec), 0.0);
    }

    #[test]
    fn map_capped_denominator_flag() {
        let spec = MetricSpec {
            k: 2,
            map_denominator: MapDenominator::CappedAtK,
            ..Default::default()
        };
        let qrels = qrels_map(&[("d1", 1), ("d2", 1), ("d3", 1)]);
        let got = map_at_k(&["d1", "d2"], &qrels, &spec);
        assert!((got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_run_perfect_and_missing_query() {
        let mut qrels = QrelsSet::new();
        qrels.insert("q1", "d1", 1);
        qrels.insert("q2", "d2", 1);
        let mut run = RankedRun::new("t");
        run.insert_query("q1", vec![RunEntry::new("d1", 1.0)]).unwrap();
        run.insert_query("q2", vec![RunEntry::new("d2", 1.0)]).unwrap();
        let report = evaluate_run(&run, &qrels, &MetricSpec::default()).unwrap();
        assert_eq!(report.mean.ndcg, 1.0);
        assert_eq!(report.mean.mrr, 1.0);
        assert_eq!(report.mean.map, 1.0);

        let mut partial = RankedRun::new("t");
        partial.insert_query("q1", vec![RunEntry::new("d1", 1.0)]).unwrap();
        let report = evaluate_run(&partial, &qrels, &MetricSpec::default()).unwrap();
        assert_eq!(report.query_count, 2);
        assert_eq!(report.per_query["q2"].ndcg, 0.0);
        assert!((report.mean.ndcg - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_run_empty_qrels_is_error() {
        let run = RankedRun::new("t");
        assert!(matches!(
            evaluate_run(&run, &QrelsSet::new(), &MetricSpec::default()),
            Err(Error::EmptyQrels)
        ));
    }

    #[test]
    fn aggregate_identity_and_unknown_name() {
        let mut cells = BTreeMap::new();
        cells.insert("a".to_string(), 0.25);
        assert_eq!(aggregate_datasets(&cells, None).unwrap(), 0.25);
        let subset = vec!["missing".to_string()];
        assert!(matches!(
            aggregate_datasets(&cells, Some(&subset)),
            Err(Error::UnknownDataset(_))
        ));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let mut cells = BTreeMap::new();
        for (name, v) in [("a", 0.1), ("b", 0.5), ("c", 0.9)] {
            cells.insert(name.to_string(), v);
        }
        let fwd = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let rev = vec!["c".to_string(), "b".to_string(), "a".to_string()];
        let x = aggregate_datasets(&cells, Some(&fwd)).unwrap();
        let y = aggregate_datasets(&cells, Some(&rev)).unwrap();
        assert!((x - y).abs() < 1e-15);
    }
}
