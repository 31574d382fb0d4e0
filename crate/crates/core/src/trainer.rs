//! Desk-scale contrastive trainer.
//!
//! The encoder is a mean-of-token-embeddings model with L2
//! normalization: the smallest architecture in which in-batch plus
//! explicit-hard-negative InfoNCE dynamics are observable. Texts whose
//! tokens are all out of vocabulary encode to the zero vector and carry
//! no gradient.
//!
//! Candidate set per instance: its own positive, then up to
//! `hard_negatives_per_instance` of its mined negatives, then the other
//! instances' positives from the same batch, deduplicated by doc_id
//! (first occurrence wins, the positive first). Deduplication keeps an
//! in-batch "negative" that shares the positive's doc_id out of the
//! softmax, so duplicated instances contribute additively.
//!
//! All trainer arithmetic is f64 with a fixed summation order, so a
//! fixed seed reproduces parameters bit for bit.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::Rng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm25::tokenize;
use crate::corpus::{Document, QrelsSet, Query};
use crate::dense::{dense_search_all, Similarity, VectorStore};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, MetricSpec};
use crate::mining::TrainingInstance;
use crate::mixture::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(format!("unknown optimizer `{other}` (expected sgd or adam)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub temperature: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub hard_negatives_per_instance: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 64,
            temperature: 0.05,
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 20,
            seed: 7,
            optimizer: OptimizerKind::Adam,
            hard_negatives_per_instance: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".to_string()));
        }
        if self.dim < 1 {
            return Err(Error::InvalidConfig("dim must be >= 1".to_string()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean-of-token-embeddings encoder with L2-normalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    tokens: Vec<String>,
    vocab: HashMap<String, u32>,
    dim: usize,
    embedding: Vec<f64>,
}

impl ToyEncoder {
    /// Random init, uniform in [-1/sqrt(d), 1/sqrt(d)), drawn from the
    /// pinned ChaCha8 stream for the seed.
    pub fn init(tokens: Vec<String>, dim: usize, seed: u64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidConfig("dim must be >= 1".to_string()));
        }
        let vocab: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if vocab.len() != tokens.len() {
            return Err(Error::InvalidConfig("duplicate token in vocabulary".to_string()));
        }
        let mut rng = seeded_rng(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let embedding = (0..tokens.len() * dim)
            .map(|_| (uniform_unit(&mut rng) * 2.0 - 1.0) * scale)
            .collect();
        Ok(ToyEncoder {
            tokens,
            vocab,
            dim,
            embedding,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn embedding_mut(&mut self) -> &mut [f64] {
        &mut self.embedding
    }

    pub fn token_row(&self, token: &str) -> Option<&[f64]> {
        self.vocab
            .get(token)
            .map(|&i| &self.embedding[i as usize * self.dim..(i as usize + 1) * self.dim])
    }

    fn token_ids(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .into_iter()
            .filter_map(|t| self.vocab.get(&t).copied())
            .collect()
    }

    /// Unit-norm encoding, or the zero vector for empty / all-OOV text.
    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_detail(text).v
    }

    fn encode_detail(&self, text: &str) -> EncodedText {
        let token_ids = self.token_ids(text);
        let mut v = vec![0.0; self.dim];
        if token_ids.is_empty() {
            return EncodedText {
                token_ids,
                v,
                norm_u: 0.0,
                zero: true,
            };
        }
        for &t in &token_ids {
            let row = &self.embedding[t as usize * self.dim..(t as usize + 1) * self.dim];
            for (acc, &x) in v.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let m = token_ids.len() as f64;
        for x in v.iter_mut() {
            *x /= m;
        }
        let norm_u = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_u == 0.0 {
            return EncodedText {
                token_ids,
                v: vec![0.0; self.dim],
                norm_u: 0.0,
                zero: true,
            };
        }
        for x in v.iter_mut() {
            *x /= norm_u;
        }
        EncodedText {
            token_ids,
            v,
            norm_u,
            zero: false,
        }
    }

    const MAGIC: &'static [u8; 8] = b"RKTENC01";

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        w.write_all(Self::MAGIC).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.tokens.len() as u32).to_le_bytes()).map_err(io)?;
        for t in &self.tokens {
            w.write_all(&(t.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(t.as_bytes()).map_err(io)?;
        }
        for x in &self.embedding {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |msg: &str| Error::parse(path, 0, msg);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != Self::MAGIC {
            return Err(bad("not an encoder file"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|e| Error::io(path, e))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let dim = read_u32(&mut r)? as usize;
        let vocab_len = read_u32(&mut r)? as usize;
        let mut tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            tokens.push(String::from_utf8(buf).map_err(|_| bad("token is not UTF-8"))?);
        }
        let mut embedding = Vec::with_capacity(vocab_len * dim);
        let mut f64_buf = [0u8; 8];
        for _ in 0..vocab_len * dim {
            r.read_exact(&mut f64_buf).map_err(|e| Error::io(path, e))?;
            embedding.push(f64::from_le_bytes(f64_buf));
        }
        let vocab = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(ToyEncoder {
            tokens,
            vocab,
            dim,
            embedding,
        })
    }
}

fn uniform_unit(rng: &mut ChaCha8Rng) -> f64 {
    // 53 high bits -> [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct EncodedText {
    token_ids: Vec<u32>,
    v: Vec<f64>,
    norm_u: f64,
    zero: bool,
}

/// Vocabulary in first-occurrence order over query, positive, and
/// negative texts.
pub fn build_vocab(instances: &[TrainingInstance]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut tokens = Vec::new();
    let mut take = |text: &str| {
        for t in tokenize(text) {
            if seen.insert(t.clone()) {
                tokens.push(t);
            }
        }
    };
    for inst in instances {
        take(&inst.query_text);
        take(&inst.positive.text);
        for n in &inst.negatives {
            take(&n.text);
        }
    }
    tokens
}

/// InfoNCE over one query: candidates are the positive plus the given
/// negatives, similarities are dot products scaled by the temperature,
/// and the log-softmax is computed with max subtraction.
pub fn infonce_loss(
    query: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    temperature: f64,
) -> Result<f64> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let mut scaled = Vec::with_capacity(negatives.len() + 1);
    scaled.push(dot(query, positive) / temperature);
    for n in negatives {
        scaled.push(dot(query, n) / temperature);
    }
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(log_sum + max - scaled[0])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct BatchGrad {
    /// Gradient of the mean batch loss w.r.t. the embedding table.
    pub grad: Vec<f64>,
    pub mean_loss: f64,
    /// Instances that contributed (non-zero query encoding).
    pub included: usize,
    /// Instances skipped because their query encoded to zero.
    pub skipped: usize,
}

/// Exact analytic gradient of the mean batch loss, including the
/// Jacobian of the L2 normalization over the mean-pooled encoder.
pub fn infonce_grad(
    batch: &[&TrainingInstance],
    encoder: &ToyEncoder,
    config: &TrainConfig,
) -> Result<BatchGrad> {
    config.validate()?;
    let dim = encoder.dim;
    let mut grad = vec![0.0; encoder.embedding.len()];
    let mut loss_sum = 0.0;
    let mut included = 0usize;
    let mut skipped = 0usize;

    let mut cache: HashMap<&str, EncodedText> = HashMap::new();
    for inst in batch {
        insert_encoding(&mut cache, encoder, &inst.query_text);
        insert_encoding(&mut cache, encoder, &inst.positive.text);
        for n in inst.negatives.iter().take(config.hard_negatives_per_instance) {
            insert_encoding(&mut cache, encoder, &n.text);
        }
    }

    for (i, inst) in batch.iter().enumerate() {
        let query = &cache[inst.query_text.as_str()];
        if query.zero {
            skipped += 1;
            continue;
        }
        // candidate texts, deduplicated by doc_id, positive first
        let mut seen: HashSet<&str> = HashSet::new();
        seen.insert(inst.positive.doc_id.as_str());
        let mut candidates: Vec<&str> = vec![inst.positive.text.as_str()];
        for n in inst.negatives.iter().take(config.hard_negatives_per_instance) {
            if seen.insert(n.doc_id.as_str()) {
                candidates.push(n.text.as_str());
            }
        }
        for (j, other) in batch.iter().enumerate() {
            if j != i && seen.insert(other.positive.doc_id.as_str()) {
                candidates.push(other.positive.text.as_str());
            }
        }

        let scaled: Vec<f64> = candidates
            .iter()
            .map(|text| dot(&query.v, &cache[*text].v) / config.temperature)
            .collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
        let denom: f64 = exp.iter().sum();
        loss_sum += denom.ln() + max - scaled[0];
        included += 1;

        let mut query_upstream = vec![0.0; dim];
        for (j, text) in candidates.iter().enumerate() {
            let candidate = &cache[*text];
            let softmax = exp[j] / denom;
            let coeff = (softmax - if j == 0 { 1.0 } else { 0.0 }) / config.temperature;
            for (acc, &c) in query_upstream.iter_mut().zip(&candidate.v) {
                *acc += coeff * c;
            }
            if !candidate.zero {
                let upstream: Vec<f64> = query.v.iter().map(|&q| coeff * q).collect();
                accumulate_text_grad(&mut grad, candidate, &upstream, dim);
            }
        }
        accumulate_text_grad(&mut grad, query, &query_upstream, dim);
    }

    if included > 0 {
        let inv = 1.0 / included as f64;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        loss_sum *= inv;
    }
    Ok(BatchGrad {
        grad,
        mean_loss: loss_sum,
        included,
        skipped,
    })
}

fn insert_encoding<'a>(
    cache: &mut HashMap<&'a str, EncodedText>,
    encoder: &ToyEncoder,
    text: &'a str,
) {
    if !cache.contains_key(text) {
        cache.insert(text, encoder.encode_detail(text));
    }
}

/// Backprop through `v = u / |u|`, `u = mean of token rows`:
/// dL/du = (g - v (v . g)) / |u|, then each token occurrence receives
/// dL/du / m.
fn accumulate_text_grad(grad: &mut [f64], enc: &EncodedText, upstream: &[f64], dim: usize) {
    if enc.zero {
        return;
    }
    let vg = dot(&enc.v, upstream);
    let m = enc.token_ids.len() as f64;
    let scale = 1.0 / (enc.norm_u * m);
    for &t in &enc.token_ids {
        let row = &mut grad[t as usize * dim..(t as usize + 1) * dim];
        for d in 0..dim {
            row[d] += (upstream[d] - enc.v[d] * vg) * scale;
        }
    }
}

/// Forward-only mean batch loss over the same candidate construction as
/// [`infonce_grad`].
pub fn batch_loss(
    batch: &[&TrainingInstance],
    encoder: &ToyEncoder,
    config: &TrainConfig,
) -> Result<f64> {
    config.validate()?;
    let mut cache: HashMap<&str, EncodedText> = HashMap::new();
    let mut loss_sum = 0.0;
    let mut included = 0usize;
    for (i, inst) in batch.iter().enumerate() {
        insert_encoding(&mut cache, encoder, &inst.query_text);
        let query_zero = cache[inst.query_text.as_str()].zero;
        if query_zero {
            continue;
        }
        let mut seen: HashSet<&str> = HashSet::new();
        seen.insert(inst.positive.doc_id.as_str());
        let mut candidates: Vec<&str> = vec![inst.positive.text.as_str()];
        for n in inst.negatives.iter().take(config.hard_negatives_per_instance) {
            if seen.insert(n.doc_id.as_str()) {
                candidates.push(n.text.as_str());
            }
        }
        for (j, other) in batch.iter().enumerate() {
            if j != i && seen.insert(other.positive.doc_id.as_str()) {
                candidates.push(other.positive.text.as_str());
            }
        }
        for text in &candidates {
            insert_encoding(&mut cache, encoder, text);
        }
        let query = &cache[inst.query_text.as_str()];
        let positive = &cache[candidates[0]];
        let negative_refs: Vec<&[f64]> = candidates[1..]
            .iter()
            .map(|t| cache[*t].v.as_slice())
            .collect();
        loss_sum += infonce_loss(&query.v, &positive.v, &negative_refs, config.temperature)?;
        included += 1;
    }
    Ok(if included > 0 {
        loss_sum / included as f64
    } else {
        0.0
    })
}

enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: u64 },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam {
                m: vec![0.0; len],
                v: vec![0.0; len],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let bc1 = 1.0 - BETA1.powi(*t as i32);
                let bc2 = 1.0 - BETA2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

/// Held-out retrieval set for the per-epoch MRR@10 hook.
#[derive(Debug, Clone)]
pub struct TrainEvalSet {
    pub queries: Vec<Query>,
    pub corpus: Vec<Document>,
    pub qrels: QrelsSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub eval_mrr: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub encoder: ToyEncoder,
    pub history: Vec<EpochStats>,
    /// MRR@10 of the randomly initialized encoder, when a hook is given.
    pub initial_mrr: Option<f64>,
}

/// Retrieval MRR@10 of an encoder over an evaluation set, via the
/// brute-force dense searcher.
pub fn encoder_mrr_at_10(encoder: &ToyEncoder, eval: &TrainEvalSet) -> Result<f64> {
    let doc_rows: Vec<(String, Vec<f32>)> = eval
        .corpus
        .iter()
        .map(|d| {
            (
                d.doc_id.clone(),
                encoder.encode(&d.indexing_text()).iter().map(|&x| x as f32).collect(),
            )
        })
        .collect();
    let query_rows: Vec<(String, Vec<f32>)> = eval
        .queries
        .iter()
        .map(|q| {
            (
                q.query_id.clone(),
                encoder.encode(&q.text).iter().map(|&x| x as f32).collect(),
            )
        })
        .collect();
    let docs = VectorStore::from_rows(doc_rows, Some(encoder.dim()))?;
    let queries = VectorStore::from_rows(query_rows, Some(encoder.dim()))?;
    let run = dense_search_all(&docs, &queries, 10, Similarity::Cosine, "toy-encoder")?;
    let report = evaluate_run(&run, &eval.qrels, &MetricSpec::with_k(10))?;
    Ok(report.mean.mrr)
}

/// Train an encoder with InfoNCE over in-batch plus explicit hard
/// negatives. Deterministic under a fixed seed.
pub fn train(
    instances: &[TrainingInstance],
    config: &TrainConfig,
    eval: Option<&TrainEvalSet>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::InvalidConfig("no training instances".to_string()));
    }
    let vocab = build_vocab(instances);
    let mut encoder = ToyEncoder::init(vocab, config.dim, config.seed)?;
    let mut optimizer = OptimizerState::new(config.optimizer, encoder.embedding.len());
    let initial_mrr = eval.map(|e| encoder_mrr_at_10(&encoder, e)).transpose()?;

    // epoch shuffles draw from their own ChaCha8 stream, keyed on seed+1
    // so they stay independent of the init draws
    let mut order_rng = seeded_rng(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        fisher_yates(&mut order, &mut order_rng);
        let mut loss_sum = 0.0;
        let mut contributing = 0usize;
        let mut skipped = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingInstance> = chunk.iter().map(|&i| &instances[i]).collect();
            let result = infonce_grad(&batch, &encoder, config)?;
            optimizer.step(&mut encoder.embedding, &result.grad, config.learning_rate);
            loss_sum += result.mean_loss * result.included as f64;
            contributing += result.included;
            skipped += result.skipped;
        }
        if skipped > 0 {
            log::warn!("epoch {epoch}: skipped {skipped} instances with all-OOV queries");
        }
        let mean_loss = if contributing > 0 {
            loss_sum / contributing as f64
        } else {
            0.0
        };
        let eval_mrr = eval.map(|e| encoder_mrr_at_10(&encoder, e)).transpose()?;
        history.push(EpochStats {
            epoch,
            mean_loss,
            eval_mrr,
        });
    }
    Ok(TrainOutcome {
        encoder,
        history,
        initial_mrr,
    })
}

fn fisher_yates(items: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}
