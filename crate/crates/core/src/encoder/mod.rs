//! The bi-encoder.
//!
//! Each mention is featurized into two sparse boundary views which are
//! projected by two matrices and concatenated. Training pulls every mention
//! towards the centroid of its gold cluster and pushes it away from the
//! centroids of in-batch and hard-negative clusters:
//!
//! ```text
//! loss(m, c') = -y_m . y_c' + log sum_{c in B + {c'}} exp(y_m . y_c)
//! ```
//!
//! Centroids are rebuilt from a fresh embedding pass at the start of every
//! epoch and are held constant within it.

pub mod cemb;
mod features;
mod params;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Partition};
use crate::error::{Error, Result};

pub use features::{featurize_mention, FeatureVector};
pub use cemb::{read_embeddings, read_embeddings_file, write_embeddings, write_embeddings_file};
pub use params::{EncoderParams, View};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub feature_space_size: usize,
    pub window_w: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hard_negative_clusters: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: 64,
            feature_space_size: 1 << 18,
            window_w: 5,
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 32,
            hard_negative_clusters: 10,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("encoder.{what} must be positive")));
        if self.embedding_dim == 0 || self.embedding_dim % 2 != 0 {
            return Err(Error::InvalidConfig("encoder.embedding_dim must be positive and even".into()));
        }
        if self.feature_space_size == 0 {
            return bad("feature_space_size");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.hard_negative_clusters == 0 {
            return bad("hard_negative_clusters");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentionEmbedding {
    pub mention_id: String,
    pub vector: Vec<f64>,
}

/// Gold cluster id to centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidTable {
    dim: usize,
    centroids: BTreeMap<String, Vec<f64>>,
}

impl CentroidTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, cluster: &str) -> Option<&[f64]> {
        self.centroids.get(cluster).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.centroids.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    fn centroid(&self, cluster: &str) -> Result<&[f64]> {
        self.get(cluster).ok_or_else(|| Error::UnknownCluster(cluster.to_owned()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `[start features x start matrix, end features x end matrix]`.
pub fn embed_mention(params: &EncoderParams, features: &FeatureVector) -> Result<Vec<f64>> {
    if let Some(max) = features.max_index() {
        if max as usize >= params.feature_space_size() {
            return Err(Error::DimensionMismatch {
                expected: params.feature_space_size(),
                found: max as usize + 1,
            });
        }
    }
    let half = params.half_dim();
    let mut out = vec![0.0; 2 * half];
    for (view, chunk) in View::BOTH.into_iter().zip(out.chunks_exact_mut(half)) {
        for &(i, w) in features.view(view) {
            for (o, r) in chunk.iter_mut().zip(params.row(view, i).iter()) {
                *o += w * r;
            }
        }
    }
    Ok(out)
}

/// Features for every mention of the corpus, in corpus order.
pub fn featurize_corpus(corpus: &Corpus, w: usize, feature_space_size: usize) -> Result<Vec<(String, FeatureVector)>> {
    corpus
        .mentions()
        .map(|m| Ok((m.mention_id.clone(), featurize_mention(corpus, &m.mention_id, w, feature_space_size)?)))
        .collect()
}

pub fn embed_all(params: &EncoderParams, features: &[(String, FeatureVector)]) -> Result<Vec<MentionEmbedding>> {
    features
        .iter()
        .map(|(id, f)| {
            Ok(MentionEmbedding {
                mention_id: id.clone(),
                vector: embed_mention(params, f)?,
            })
        })
        .collect()
}

pub fn embed_corpus(params: &EncoderParams, corpus: &Corpus, w: usize) -> Result<Vec<MentionEmbedding>> {
    embed_all(params, &featurize_corpus(corpus, w, params.feature_space_size())?)
}

/// Mean member embedding per gold cluster. Members are summed in mention-id
/// order, so the result does not depend on the order of `embeddings`.
pub fn compute_centroids(embeddings: &[MentionEmbedding], gold: &Partition) -> Result<CentroidTable> {
    let by_id: HashMap<&str, &[f64]> = embeddings
        .iter()
        .map(|e| (e.mention_id.as_str(), e.vector.as_slice()))
        .collect();
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    let mut centroids = BTreeMap::new();
    for (cluster, members) in gold.clusters() {
        let mut sum = vec![0.0; dim];
        for m in &members {
            let v = by_id.get(m).ok_or_else(|| Error::MissingEmbedding((*m).to_owned()))?;
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            for (s, x) in sum.iter_mut().zip(v.iter()) {
                *s += x;
            }
        }
        let n = members.len() as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        centroids.insert(cluster.to_owned(), sum);
    }
    Ok(CentroidTable { dim, centroids })
}

/// Inner product of a mention embedding and a centroid.
pub fn score_mention_cluster(embedding: &[f64], centroid: &[f64]) -> Result<f64> {
    if embedding.len() != centroid.len() {
        return Err(Error::DimensionMismatch {
            expected: embedding.len(),
            found: centroid.len(),
        });
    }
    Ok(dot(embedding, centroid))
}

/// The `n` highest-scoring clusters other than `true_cluster`. Equal scores
/// fall back to ascending cluster id.
pub fn select_hard_negatives(
    embedding: &[f64],
    true_cluster: &str,
    centroids: &CentroidTable,
    n: usize,
) -> BTreeSet<String> {
    let mut scored: Vec<(f64, &str)> = centroids
        .iter()
        .filter(|(c, _)| *c != true_cluster)
        .map(|(c, v)| (dot(embedding, v), c))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, c)| c.to_owned()).collect()
}

/// Sparse gradient over [`EncoderParams`]: only rows of active features.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncoderGrad {
    pub rows: [BTreeMap<u32, Vec<f64>>; 2],
}

impl EncoderGrad {
    pub fn get(&self, view: View, row: u32, col: usize) -> f64 {
        self.rows[view as usize].get(&row).map_or(0.0, |r| r[col])
    }

    fn accumulate(&mut self, other: &EncoderGrad, scale: f64) {
        for (mine, theirs) in self.rows.iter_mut().zip(&other.rows) {
            for (i, r) in theirs {
                let dst = mine.entry(*i).or_insert_with(|| vec![0.0; r.len()]);
                for (d, g) in dst.iter_mut().zip(r) {
                    *d += scale * g;
                }
            }
        }
    }

    /// `params -= lr * self`.
    pub fn apply(&self, params: &mut EncoderParams, lr: f64) {
        for view in View::BOTH {
            for (i, g) in &self.rows[view as usize] {
                let row = params.row_mut(view, *i);
                for (p, d) in row.iter_mut().zip(g) {
                    *p -= lr * d;
                }
            }
        }
    }
}

/// Loss value only; the gradient check and tests use it as the reference.
pub fn loss(
    params: &EncoderParams,
    features: &FeatureVector,
    true_cluster: &str,
    negatives: &BTreeSet<String>,
    centroids: &CentroidTable,
) -> Result<f64> {
    loss_and_grad(params, features, true_cluster, negatives, centroids).map(|(l, _)| l)
}

/// Softmax cross entropy of the true cluster against `negatives`, with the
/// true cluster always part of the denominator, and its analytic gradient.
pub fn loss_and_grad(
    params: &EncoderParams,
    features: &FeatureVector,
    true_cluster: &str,
    negatives: &BTreeSet<String>,
    centroids: &CentroidTable,
) -> Result<(f64, EncoderGrad)> {
    let y = embed_mention(params, features)?;
    let positive = centroids.centroid(true_cluster)?;
    if positive.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: positive.len(),
        });
    }
    let mut candidates = vec![positive];
    for c in negatives.iter().filter(|c| c.as_str() != true_cluster) {
        candidates.push(centroids.centroid(c)?);
    }
    let scores: Vec<f64> = candidates.iter().map(|c| dot(&y, c)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = -scores[0] + max + z.ln();

    // d loss / d y = sum_c p_c y_c - y_c'
    let mut dy = vec![0.0; y.len()];
    for (c, e) in candidates.iter().zip(&exps) {
        let p = e / z;
        for (d, v) in dy.iter_mut().zip(c.iter()) {
            *d += p * v;
        }
    }
    for (d, v) in dy.iter_mut().zip(positive) {
        *d -= v;
    }

    let half = params.half_dim();
    let mut grad = EncoderGrad::default();
    for (view, dy_half) in View::BOTH.into_iter().zip(dy.chunks_exact(half)) {
        let rows = &mut grad.rows[view as usize];
        for &(i, w) in features.view(view) {
            let row = rows.entry(i).or_insert_with(|| vec![0.0; half]);
            for (r, d) in row.iter_mut().zip(dy_half) {
                *r += w * d;
            }
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean per-sample loss of each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains the encoder on every mention of `corpus`, all of which need gold
/// labels. Zero epochs returns the initialization.
pub fn train_encoder(corpus: &Corpus, config: &EncoderConfig) -> Result<(EncoderParams, TrainingLog)> {
    config.validate()?;
    let gold = corpus.gold_partition()?;
    let mut params = EncoderParams::init(config.feature_space_size, config.embedding_dim, config.seed)?;
    let features = featurize_corpus(corpus, config.window_w, config.feature_space_size)?;
    let labels: Vec<&str> = features
        .iter()
        .map(|(id, _)| gold.cluster_of(id).expect("gold covers every mention"))
        .collect();
    let mut log = TrainingLog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();

    for epoch in 0..config.epochs {
        let snapshot = embed_all(&params, &features)?;
        let centroids = compute_centroids(&snapshot, &gold)?;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let in_batch: BTreeSet<String> = batch.iter().map(|&i| labels[i].to_owned()).collect();
            let mut step = EncoderGrad::default();
            for &i in batch {
                let mut negatives = select_hard_negatives(
                    &snapshot[i].vector,
                    labels[i],
                    &centroids,
                    config.hard_negative_clusters,
                );
                negatives.extend(in_batch.iter().filter(|c| c.as_str() != labels[i]).cloned());
                let (l, g) = loss_and_grad(&params, &features[i].1, labels[i], &negatives, &centroids)?;
                total += l;
                step.accumulate(&g, 1.0 / batch.len() as f64);
            }
            step.apply(&mut params, config.learning_rate);
        }
        let mean = total / features.len().max(1) as f64;
        log::debug!("encoder epoch {epoch}: mean loss {mean:.6}");
        log.epoch_loss.push(mean);
    }
    if !params.all_finite() {
        return Err(Error::InvalidConfig(
            "encoder training diverged (non-finite parameters); lower encoder.learning_rate".into(),
        ));
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &[f64])]) -> CentroidTable {
        CentroidTable {
            dim: entries[0].1.len(),
            centroids: entries.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect(),
        }
    }

    fn emb(id: &str, v: &[f64]) -> MentionEmbedding {
        MentionEmbedding {
            mention_id: id.into(),
            vector: v.to_vec(),
        }
    }

    /// Feature vector whose start view is the single index 0, so the
    /// embedding's first half is row 0 of the start matrix.
    fn basis(i: u32) -> FeatureVector {
        FeatureVector {
            start: vec![(i, 1.0)],
            end: vec![],
        }
    }

    #[test]
    fn zero_params_embed_to_zero() {
        let p = EncoderParams::zeros(16, 4).unwrap();
        let f = FeatureVector {
            start: vec![(1, 0.5), (3, 2.0)],
            end: vec![(2, 1.0)],
        };
        assert_eq!(embed_mention(&p, &f).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn basis_feature_picks_a_row() {
        let p = EncoderParams::init(16, 4, 9).unwrap();
        let y = embed_mention(&p, &basis(5)).unwrap();
        assert_eq!(&y[..2], p.row(View::Start, 5).as_ref());
        assert_eq!(&y[2..], &[0.0, 0.0]);
        let end_only = FeatureVector {
            start: vec![],
            end: vec![(7, 1.0)],
        };
        let y = embed_mention(&p, &end_only).unwrap();
        assert_eq!(&y[2..], p.row(View::End, 7).as_ref());
    }

    #[test]
    fn embedding_scales_linearly() {
        let p = EncoderParams::init(16, 4, 2).unwrap();
        let f = FeatureVector {
            start: vec![(1, 0.5), (3, 2.0)],
            end: vec![(2, 1.0)],
        };
        let y = embed_mention(&p, &f).unwrap();
        let y2 = embed_mention(&p, &f.scaled(2.0)).unwrap();
        for (a, b) in y.iter().zip(&y2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn feature_index_beyond_space_is_rejected() {
        let p = EncoderParams::init(16, 4, 2).unwrap();
        assert!(matches!(
            embed_mention(&p, &basis(16)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn centroid_of_singleton_is_the_embedding() {
        let gold = Partition::from_clusters([vec!["a"]]);
        let t = compute_centroids(&[emb("a", &[0.3, -0.7])], &gold).unwrap();
        assert_eq!(t.get("cluster_0").unwrap(), &[0.3, -0.7]);
        // score against own singleton centroid = squared norm
        let s = score_mention_cluster(&[0.3, -0.7], t.get("cluster_0").unwrap()).unwrap();
        assert_eq!(s, 0.3 * 0.3 + 0.7 * 0.7);
    }

    #[test]
    fn centroid_is_the_mean_and_order_free() {
        let gold = Partition::from_clusters([vec!["a", "b", "c"]]);
        let e = [emb("a", &[1.0, 0.0]), emb("b", &[0.0, 1.0]), emb("c", &[0.1, 0.7])];
        let t = compute_centroids(&e[..2], &Partition::from_clusters([vec!["a", "b"]])).unwrap();
        assert_eq!(t.get("cluster_0").unwrap(), &[0.5, 0.5]);
        let fwd = compute_centroids(&e, &gold).unwrap();
        let rev: Vec<_> = e.iter().rev().cloned().collect();
        assert_eq!(fwd, compute_centroids(&rev, &gold).unwrap());
    }

    #[test]
    fn centroid_missing_embedding() {
        let gold = Partition::from_clusters([vec!["a", "z"]]);
        assert!(matches!(
            compute_centroids(&[emb("a", &[1.0])], &gold),
            Err(Error::MissingEmbedding(m)) if m == "z"
        ));
    }

    #[test]
    fn inner_products() {
        assert_eq!(score_mention_cluster(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score_mention_cluster(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(score_mention_cluster(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(score_mention_cluster(&[1.0], &[1.0, 2.0]).is_err());
    }

    /// Params whose start row 0 is `y`, so `basis(0)` embeds to `[y, 0..]`.
    fn params_embedding(y: &[f64]) -> EncoderParams {
        let mut p = EncoderParams::zeros(4, 2 * y.len()).unwrap();
        p.row_mut(View::Start, 0).copy_from_slice(y);
        p
    }

    #[test]
    fn loss_without_negatives_is_zero() {
        let p = params_embedding(&[0.7, -1.3]);
        let t = table(&[("t", &[2.0, 0.5, 0.0, 0.0])]);
        let (l, g) = loss_and_grad(&p, &basis(0), "t", &BTreeSet::new(), &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.rows.iter().flat_map(|r| r.values()).flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn loss_matches_worked_example() {
        // y = [1, 0, 0, 0]; scores: t -> 2, a -> 0, b -> -1.
        let p = params_embedding(&[1.0, 0.0]);
        let t = table(&[
            ("t", &[2.0, 0.0, 0.0, 0.0]),
            ("a", &[0.0, 5.0, 0.0, 0.0]),
            ("b", &[-1.0, 0.0, 0.0, 0.0]),
        ]);
        let negatives: BTreeSet<String> = ["a".to_string(), "b".to_string()].into();
        let l = loss(&p, &basis(0), "t", &negatives, &t).unwrap();
        // -2 + ln(e^2 + e^0 + e^-1), evaluated independently
        let expected = -2.0 + (2f64.exp() + 1.0 + (-1f64).exp()).ln();
        assert!((l - expected).abs() < 1e-12);
        assert!((l - 0.1699).abs() < 1e-4, "{l}");
    }

    #[test]
    fn very_negative_cluster_barely_matters() {
        let p = params_embedding(&[1.0, 0.0]);
        let t = table(&[
            ("t", &[2.0, 0.0, 0.0, 0.0]),
            ("a", &[0.0, 0.0, 0.0, 0.0]),
            ("far", &[-1e4, 0.0, 0.0, 0.0]),
        ]);
        let base = loss(&p, &basis(0), "t", &["a".to_string()].into(), &t).unwrap();
        let more = loss(&p, &basis(0), "t", &["a".to_string(), "far".to_string()].into(), &t).unwrap();
        assert!((base - more).abs() < 1e-9);
    }

    #[test]
    fn unknown_clusters_are_errors() {
        let p = params_embedding(&[1.0, 0.0]);
        let t = table(&[("t", &[2.0, 0.0, 0.0, 0.0])]);
        assert!(matches!(
            loss(&p, &basis(0), "nope", &BTreeSet::new(), &t),
            Err(Error::UnknownCluster(_))
        ));
        assert!(matches!(
            loss(&p, &basis(0), "t", &["x".to_string()].into(), &t),
            Err(Error::UnknownCluster(_))
        ));
    }

    #[test]
    fn hard_negatives_exclude_truth_and_rank_by_score() {
        let t = table(&[("A", &[3.0]), ("B", &[2.0]), ("true", &[5.0]), ("C", &[1.0])]);
        let got = select_hard_negatives(&[1.0], "true", &t, 2);
        assert_eq!(got, ["A".to_string(), "B".to_string()].into());
        let all = select_hard_negatives(&[1.0], "true", &t, 10);
        assert_eq!(all.len(), 3);
        let only = table(&[("true", &[1.0])]);
        assert!(select_hard_negatives(&[1.0], "true", &only, 3).is_empty());
    }

    #[test]
    fn hard_negative_ties_break_by_id() {
        let t = table(&[("b", &[1.0]), ("a", &[1.0]), ("c", &[1.0]), ("t", &[0.0])]);
        assert_eq!(
            select_hard_negatives(&[1.0], "t", &t, 2),
            ["a".to_string(), "b".to_string()].into()
        );
    }
}
