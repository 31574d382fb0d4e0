//! Multi-source training-mixture construction.
//!
//! Sources are concatenated in the order given, exact duplicates
//! (case-folded, whitespace-collapsed query text + positive doc_id)
//! keep their first occurrence, and the survivors are shuffled with a
//! pinned PRNG so the same inputs and seed always produce the same
//! bytes.
//!
//! The shuffle is Fisher-Yates driven by ChaCha8 keyed with the 64-bit
//! seed (little-endian, zero-padded to 32 bytes); at step `i` (from
//! n-1 down to 1) the swap index is `next_u64() mod (i + 1)`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::{read_instances, write_instances, TrainingInstance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCount {
    pub tag: String,
    pub path: String,
    pub input_count: usize,
    pub kept_count: usize,
}

/// Audit record for a built mixture: per-source counts, dedup count,
/// total, and the shuffle seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub sources: Vec<SourceCount>,
    pub dedup_removed: usize,
    pub total: usize,
    pub seed: u64,
    pub created_at_epoch_secs: u64,
}

impl MixtureManifest {
    pub fn check_invariants(&self) -> Result<()> {
        let kept: usize = self.sources.iter().map(|s| s.kept_count).sum();
        let input: usize = self.sources.iter().map(|s| s.input_count).sum();
        if self.total != kept {
            return Err(Error::InvalidConfig(format!(
                "manifest total {} != sum of kept counts {kept}",
                self.total
            )));
        }
        if input != self.total + self.dedup_removed {
            return Err(Error::InvalidConfig(format!(
                "count conservation violated: {input} inputs != {} kept + {} removed",
                self.total, self.dedup_removed
            )));
        }
        Ok(())
    }
}

/// Dedup key: case-folded, whitespace-collapsed query text plus the
/// positive doc_id.
pub fn dedup_key(instance: &TrainingInstance) -> String {
    let folded = instance
        .query_text
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    format!("{folded}\u{1f}{}", instance.positive.doc_id)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Pinned Fisher-Yates (see module docs).
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = seeded_rng(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Build a mixture from in-memory sources. Every instance is retagged
/// with its source's tag; path strings are only for the manifest.
pub fn build_mixture(
    sources: Vec<(String, String, Vec<TrainingInstance>)>,
    seed: u64,
) -> Result<(Vec<TrainingInstance>, MixtureManifest)> {
    if sources.is_empty() {
        return Err(Error::InvalidConfig("mixture needs at least one source".to_string()));
    }
    let mut seen: HashSet<String> = HashSet::new();
    let mut counts = Vec::with_capacity(sources.len());
    let mut mixture = Vec::new();
    let mut dedup_removed = 0;
    for (tag, path, instances) in sources {
        let input_count = instances.len();
        let mut kept_count = 0;
        for mut inst in instances {
            inst.source = tag.clone();
            if seen.insert(dedup_key(&inst)) {
                kept_count += 1;
                mixture.push(inst);
            } else {
                dedup_removed += 1;
            }
        }
        counts.push(SourceCount {
            tag,
            path,
            input_count,
            kept_count,
        });
    }
    seeded_shuffle(&mut mixture, seed);
    let manifest = MixtureManifest {
        sources: counts,
        dedup_removed,
        total: mixture.len(),
        seed,
        created_at_epoch_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    manifest.check_invariants()?;
    Ok((mixture, manifest))
}

/// File-level wrapper: read each tagged source, build the mixture, and
/// write the shuffled instances plus the manifest.
pub fn build_mixture_files(
    sources: &[(String, PathBuf)],
    seed: u64,
    out: &Path,
    manifest_path: &Path,
) -> Result<MixtureManifest> {
    let mut loaded = Vec::with_capacity(sources.len());
    for (tag, path) in sources {
        let instances = read_instances(path).map_err(|e| Error::BadSource {
            tag: tag.clone(),
            msg: e.to_string(),
        })?;
        loaded.push((tag.clone(), path.display().to_string(), instances));
    }
    let (mixture, manifest) = build_mixture(loaded, seed)?;
    write_instances(&mixture, out)?;
    let file = std::fs::File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    serde_json::to_writer_pretty(file, &manifest)
        .map_err(|e| Error::parse(manifest_path, 0, e.to_string()))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mining::PositiveDoc;

    fn instance(query_text: &str, positive: &str) -> TrainingInstance {
        TrainingInstance {
            query_id: format!("q-{query_text}-{positive}"),
            query_text: query_text.to_string(),
            positive: PositiveDoc {
                doc_id: positive.to_string(),
                text: "p".to_string(),
            },
            negatives: Vec::new(),
            source: String::new(),
            positive_rank: None,
            positive_score: None,
        }
    }

    fn batch(tag: &str, n: usize) -> (String, String, Vec<TrainingInstance>) {
        (
            tag.to_string(),
            format!("{tag}.jsonl"),
            (0..n).map(|i| instance(&format!("{tag} pergunta {i}"), &format!("{tag}-d{i}"))).collect(),
        )
    }

    #[test]
    fn disjoint_sources_concatenate_without_dedup() {
        let (mixture, manifest) =
            build_mixture(vec![batch("a", 5), batch("b", 3)], 7).unwrap();
        assert_eq!(mixture.len(), 8);
        assert_eq!(manifest.total, 8);
        assert_eq!(manifest.dedup_removed, 0);
        manifest.check_invariants().unwrap();
    }

    #[test]
    fn duplicate_keeps_first_source() {
        let shared = instance("mesma pergunta", "d1");
        let sources = vec![
            ("first".to_string(), "a".to_string(), vec![shared.clone()]),
            ("second".to_string(), "b".to_string(), vec![shared]),
        ];
        let (mixture, manifest) = build_mixture(sources, 7).unwrap();
        assert_eq!(mixture.len(), 1);
        assert_eq!(manifest.dedup_removed, 1);
        assert_eq!(mixture[0].source, "first");
        assert_eq!(manifest.sources[0].kept_count, 1);
        assert_eq!(manifest.sources[1].kept_count, 0);
    }

    #[test]
    fn dedup_key_folds_case_and_whitespace() {
        let a = instance("Uma  Pergunta", "d1");
        let b = instance("uma pergunta", "d1");
        assert_eq!(dedup_key(&a), dedup_key(&b));
        let c = instance("uma pergunta", "d2");
        assert_ne!(dedup_key(&a), dedup_key(&c));
    }

    #[test]
    fn same_seed_same_bytes() {
        let (m1, _) = build_mixture(vec![batch("a", 64), batch("b", 64)], 42).unwrap();
        let (m2, _) = build_mixture(vec![batch("a", 64), batch("b", 64)], 42).unwrap();
        assert_eq!(
            crate::mining::instances_to_bytes(&m1),
            crate::mining::instances_to_bytes(&m2)
        );
        let (m3, _) = build_mixture(vec![batch("a", 64), batch("b", 64)], 43).unwrap();
        assert_ne!(
            crate::mining::instances_to_bytes(&m1),
            crate::mining::instances_to_bytes(&m3)
        );
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let (mixture, _) = build_mixture(vec![batch("a", 100)], 11).unwrap();
        let mut ids: Vec<&str> = mixture.iter().map(|i| i.query_id.as_str()).collect();
        ids.sort_unstable();
        let expected: Vec<String> = (0..100).map(|i| format!("q-a pergunta {i}-a-d{i}")).collect();
        let mut expected: Vec<&str> = expected.iter().map(String::as_str).collect();
        expected.sort_unstable();
        assert_eq!(ids, expected);
    }

    #[test]
    fn empty_source_list_is_error() {
        assert!(build_mixture(Vec::new(), 1).is_err());
    }
}
