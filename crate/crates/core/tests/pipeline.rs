//! End-to-end pipeline over a small synthetic legal-flavored corpus:
//! index -> first-stage run -> mining -> recoverability filter ->
//! mixture -> toy training -> evaluation.

mod common;

use retkit_core::bm25::{bm25_search_all, build_index, Bm25Params};
use retkit_core::corpus::{Document, QrelsSet, Query};
use retkit_core::filtering::{filter_instances, PriorityWeights};
use retkit_core::metrics::{evaluate_run, MetricSpec};
use retkit_core::mining::{filter_short_queries, mine_run, MiningConfig};
use retkit_core::mixture::build_mixture;
use retkit_core::trainer::{train, TrainConfig};

fn collection() -> (Vec<Document>, Vec<Query>, QrelsSet) {
    let mut rng = common::rng(0xE2E);
    let mut docs = Vec::new();
    let mut queries = Vec::new();
    let mut qrels = QrelsSet::new();
    for i in 0..40 {
        // doubled topic term keeps the positive ahead of filler overlaps
        let filler: Vec<String> = (0..6)
            .map(|_| format!("corpo{}", common::range(&mut rng, 30)))
            .collect();
        docs.push(Document::new(
            format!("doc{i:02}"),
            format!("tema{i} tema{i} {}", filler.join(" ")),
        ));
    }
    for i in 0..12 {
        let qid = format!("q{i:02}");
        // filler terms make other documents retrievable as negatives
        let shared_a = common::range(&mut rng, 30);
        let shared_b = common::range(&mut rng, 30);
        queries.push(Query::new(
            qid.clone(),
            format!("tema{i} corpo{shared_a} corpo{shared_b} assunto relevante"),
        ));
        qrels.insert(qid, format!("doc{i:02}"), 1);
    }
    (docs, queries, qrels)
}

#[test]
fn pipeline_produces_training_data_and_evaluates() {
    let (docs, queries, qrels) = collection();
    let params = Bm25Params::default();
    let index = build_index(&docs, params).unwrap();
    let run = bm25_search_all(&index, params, &queries, 50, "bm25").unwrap();

    // first-stage retrieval puts the topical doc at or near rank 1
    let report = evaluate_run(&run, &qrels, &MetricSpec::default()).unwrap();
    assert!(report.mean.mrr > 0.8, "bm25 mrr = {}", report.mean.mrr);

    let config = MiningConfig::default();
    let (instances, mining_report) =
        mine_run(&queries, &run, &qrels, &docs, &config, "jua-juris").unwrap();
    assert!(mining_report.instances_emitted > 0);
    let (instances, _, hygiene) = filter_short_queries(instances, &config);
    assert_eq!(hygiene.dropped_ambiguous, 0);
    assert!(!instances.is_empty());

    let weights = PriorityWeights::default();
    let (kept, manifest) = filter_instances(instances, &run, &weights, None).unwrap();
    assert_eq!(manifest.dropped_missing_query, 0);
    assert!(manifest.recovered > 0);
    assert_eq!(manifest.selected, kept.len());
    for inst in &kept {
        assert!(inst.positive_rank.is_some());
    }

    let (mixture, mix_manifest) = build_mixture(
        vec![(
            "jua-juris".to_string(),
            "memory".to_string(),
            kept,
        )],
        13,
    )
    .unwrap();
    mix_manifest.check_invariants().unwrap();

    let train_config = TrainConfig {
        dim: 16,
        epochs: 3,
        batch_size: 4,
        ..Default::default()
    };
    let outcome = train(&mixture, &train_config, None).unwrap();
    assert_eq!(outcome.history.len(), 3);
    assert!(outcome.history.iter().all(|e| e.mean_loss.is_finite()));
}
