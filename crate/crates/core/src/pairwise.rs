//! Pairwise coreference scoring.
//!
//! A pair is represented as `[v_a, v_b, v_a * v_b]` (element-wise product
//! last) over window-aware mention vectors, fed through a one-hidden-layer
//! ReLU perceptron with a single logistic output, and trained with binary
//! cross entropy on pairs sampled from the KNN neighborhoods.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Partition};
use crate::encoder::{embed_corpus, EncoderParams};
use crate::error::{Error, Result};
use crate::retrieval::{pairs_from_records, CandidatePair, PairRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairwiseConfig {
    pub window_w: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_k: usize,
    pub infer_k: usize,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        PairwiseConfig {
            window_w: 3,
            hidden_dim: 128,
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            train_k: 15,
            infer_k: 5,
        }
    }
}

impl PairwiseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("pairwise.{what} must be positive")));
        if self.hidden_dim == 0 {
            return bad("hidden_dim");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.train_k == 0 {
            return bad("train_k");
        }
        if self.infer_k == 0 {
            return bad("infer_k");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: CandidatePair,
    pub probability: f64,
}

/// Anything that can put a coreference probability on a mention pair.
pub trait CandidateScorer {
    fn probability(&self, pair: &CandidatePair) -> Result<f64>;

    fn score(&self, pair: &CandidatePair) -> Result<ScoredPair> {
        Ok(ScoredPair {
            pair: pair.clone(),
            probability: self.probability(pair)?,
        })
    }
}

/// Scores with gold labels: 1 for same cluster, 0 otherwise.
#[derive(Clone, Copy, Debug)]
pub struct OracleScorer<'a> {
    gold: &'a Partition,
}

impl<'a> OracleScorer<'a> {
    pub fn new(gold: &'a Partition) -> Self {
        OracleScorer { gold }
    }
}

impl CandidateScorer for OracleScorer<'_> {
    fn probability(&self, pair: &CandidatePair) -> Result<f64> {
        let label = |m: &str| self.gold.cluster_of(m).ok_or_else(|| Error::MissingGold(m.to_owned()));
        Ok(if label(pair.a())? == label(pair.b())? { 1.0 } else { 0.0 })
    }
}

pub fn oracle_score(pair: &CandidatePair, gold: &Partition) -> Result<ScoredPair> {
    OracleScorer::new(gold).score(pair)
}

/// Precomputed probabilities, e.g. from an external classifier.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<CandidatePair, f64>,
}

impl ScoreTable {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, pair: &CandidatePair) -> Option<f64> {
        self.scores.get(pair).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ScoredPair> + '_ {
        self.scores.iter().map(|(p, &s)| ScoredPair {
            pair: p.clone(),
            probability: s,
        })
    }
}

impl CandidateScorer for ScoreTable {
    fn probability(&self, pair: &CandidatePair) -> Result<f64> {
        self.get(pair)
            .ok_or_else(|| Error::UnscoredPair(pair.a().to_owned(), pair.b().to_owned()))
    }
}

/// Builds a score table from pair records; every record needs a score in
/// `[0, 1]`.
pub fn load_external_scores(records: &[PairRecord]) -> Result<ScoreTable> {
    let pairs = pairs_from_records(records)?;
    let mut scores = BTreeMap::new();
    for (pair, rec) in pairs {
        let Some(score) = rec.score else {
            return Err(Error::InvalidConfig(format!("pair {pair} has no score")));
        };
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange {
                a: pair.a().to_owned(),
                b: pair.b().to_owned(),
                score,
            });
        }
        scores.insert(pair, score);
    }
    Ok(ScoreTable { scores })
}

/// `[v_i, v_j, v_i * v_j]`.
pub fn pair_representation(v_i: &[f64], v_j: &[f64]) -> Result<Vec<f64>> {
    if v_i.len() != v_j.len() {
        return Err(Error::DimensionMismatch {
            expected: v_i.len(),
            found: v_j.len(),
        });
    }
    let mut out = Vec::with_capacity(3 * v_i.len());
    out.extend_from_slice(v_i);
    out.extend_from_slice(v_j);
    out.extend(v_i.iter().zip(v_j).map(|(a, b)| a * b));
    Ok(out)
}

/// Mention vectors for the scorer: the fixed bi-encoder applied over
/// windows of radius `w`, scaled to unit length.
pub fn mention_vectors(encoder: &EncoderParams, corpus: &Corpus, w: usize) -> Result<HashMap<String, Vec<f64>>> {
    Ok(embed_corpus(encoder, corpus, w)?
        .into_iter()
        .map(|e| {
            let mut v = e.vector;
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
            (e.mention_id, v)
        })
        .collect())
}

/// Perceptron weights. `w1` is `hidden_dim x input_dim`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Same layout as [`ScorerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerGrad {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln p + (1 - y) ln (1 - p)]` with `p = sigmoid(logit)`, computed stably.
fn bce_from_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

impl ScorerParams {
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_in = 1.0 / (input_dim as f64).sqrt();
        let b_hid = 1.0 / (hidden_dim as f64).sqrt();
        ScorerParams {
            input_dim,
            hidden_dim,
            w1: (0..input_dim * hidden_dim).map(|_| rng.gen_range(-b_in..=b_in)).collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..hidden_dim).map(|_| rng.gen_range(-b_hid..=b_hid)).collect(),
            b2: 0.0,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        ScorerParams {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let ok = self.w1.len() == self.input_dim * self.hidden_dim
            && self.b1.len() == self.hidden_dim
            && self.w2.len() == self.hidden_dim;
        if !ok {
            return Err(Error::InvalidConfig("scorer parameter shapes are inconsistent".into()));
        }
        if !self.all_finite() {
            return Err(Error::InvalidConfig("scorer parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|v| v.is_finite()) && self.b2.is_finite()
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .chunks_exact(self.input_dim)
            .zip(&self.b1)
            .map(|(row, b)| (crate::encoder::dot(row, x) + b).max(0.0))
            .collect()
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(crate::encoder::dot(&self.w2, &self.hidden(x)) + self.b2)
    }

    pub fn probability(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    /// Mean binary cross entropy over `batch` and its analytic gradient.
    pub fn bce_and_grad(&self, batch: &[(Vec<f64>, f64)]) -> Result<(f64, ScorerGrad)> {
        let mut grad = ScorerGrad {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden_dim],
            w2: vec![0.0; self.hidden_dim],
            b2: 0.0,
        };
        if batch.is_empty() {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (x, y) in batch {
            self.check_input(x)?;
            let h = self.hidden(x);
            let logit = crate::encoder::dot(&self.w2, &h) + self.b2;
            total += bce_from_logit(logit, *y);
            let d_logit = (sigmoid(logit) - y) * scale;
            grad.b2 += d_logit;
            for (j, hj) in h.iter().enumerate() {
                grad.w2[j] += d_logit * hj;
                if *hj > 0.0 {
                    let d_pre = d_logit * self.w2[j];
                    grad.b1[j] += d_pre;
                    let row = &mut grad.w1[j * self.input_dim..(j + 1) * self.input_dim];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d_pre * xi;
                    }
                }
            }
        }
        Ok((total * scale, grad))
    }

    pub fn mean_bce(&self, data: &[(Vec<f64>, f64)]) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in data {
            total += bce_from_logit(self.logit(x)?, *y);
        }
        Ok(total / data.len().max(1) as f64)
    }

    fn step(&mut self, grad: &ScorerGrad, lr: f64) {
        let upd = |p: &mut [f64], g: &[f64]| p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        upd(&mut self.w1, &grad.w1);
        upd(&mut self.b1, &grad.b1);
        upd(&mut self.w2, &grad.w2);
        self.b2 -= lr * grad.b2;
    }
}

/// A trained perceptron together with the mention vectors it reads.
#[derive(Clone, Debug)]
pub struct TrainedScorer {
    params: ScorerParams,
    vectors: HashMap<String, Vec<f64>>,
}

impl TrainedScorer {
    pub fn new(params: ScorerParams, vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        params.validate()?;
        if let Some(v) = vectors.values().next() {
            if 3 * v.len() != params.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: params.input_dim,
                    found: 3 * v.len(),
                });
            }
        }
        Ok(TrainedScorer { params, vectors })
    }

    pub fn params(&self) -> &ScorerParams {
        &self.params
    }
}

impl CandidateScorer for TrainedScorer {
    fn probability(&self, pair: &CandidatePair) -> Result<f64> {
        let x = pair_input(&self.vectors, pair)?;
        self.params.probability(&x)
    }
}

fn pair_input(vectors: &HashMap<String, Vec<f64>>, pair: &CandidatePair) -> Result<Vec<f64>> {
    let get = |m: &str| vectors.get(m).ok_or_else(|| Error::UnknownMention(m.to_owned()));
    pair_representation(get(pair.a())?, get(pair.b())?)
}

pub fn score_pair(params: &ScorerParams, vectors: &HashMap<String, Vec<f64>>, pair: &CandidatePair) -> Result<ScoredPair> {
    Ok(ScoredPair {
        pair: pair.clone(),
        probability: params.probability(&pair_input(vectors, pair)?)?,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairwiseLog {
    pub initial_bce: f64,
    /// Mean BCE over the training set after each epoch.
    pub epoch_bce: Vec<f64>,
    pub positives: usize,
    pub negatives: usize,
}

/// Trains the scorer on labelled pairs. Duplicate pairs count once.
pub fn train_pairwise(
    pairs: &[(CandidatePair, bool)],
    vectors: &HashMap<String, Vec<f64>>,
    config: &PairwiseConfig,
) -> Result<(ScorerParams, PairwiseLog)> {
    config.validate()?;
    let unique: BTreeMap<&CandidatePair, bool> = pairs.iter().map(|(p, l)| (p, *l)).collect();
    if unique.is_empty() {
        return Err(Error::EmptyInput("train_pairwise"));
    }
    let data = unique
        .iter()
        .map(|(p, &l)| Ok((pair_input(vectors, p)?, if l { 1.0 } else { 0.0 })))
        .collect::<Result<Vec<_>>>()?;
    let positives = unique.values().filter(|&&l| l).count();
    let negatives = data.len() - positives;
    if positives == 0 || negatives == 0 {
        log::warn!("pairwise training set has a single class ({positives} positive, {negatives} negative)");
    }
    let input_dim = data[0].0.len();
    let mut params = ScorerParams::init(input_dim, config.hidden_dim, config.seed);
    let mut log = PairwiseLog {
        initial_bce: params.mean_bce(&data)?,
        epoch_bce: Vec::with_capacity(config.epochs),
        positives,
        negatives,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            let (_, grad) = params.bce_and_grad(&batch)?;
            params.step(&grad, config.learning_rate);
        }
        let bce = params.mean_bce(&data)?;
        log::debug!("pairwise epoch {epoch}: mean bce {bce:.6}");
        log.epoch_bce.push(bce);
    }
    if !params.all_finite() {
        return Err(Error::InvalidConfig(
            "pairwise training diverged; lower pairwise.learning_rate".into(),
        ));
    }
    Ok((params, log))
}

/// Scores every pair, in set order.
pub fn score_all(scorer: &dyn CandidateScorer, pairs: &BTreeSet<CandidatePair>) -> Result<Vec<ScoredPair>> {
    pairs.iter().map(|p| scorer.score(p)).collect()
}
