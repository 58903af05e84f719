//! Seeded inputs for the stage benchmarks in `benches/`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdcr_core::{CandidatePair, CandidateScorer, MentionEmbedding, Partition};

pub fn mention_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i:05}")).collect()
}

/// Partition of `n` mentions into about `n / cluster_size` clusters.
pub fn random_partition(n: usize, cluster_size: usize, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = (n / cluster_size.max(1)).max(1);
    Partition {
        assignment: mention_ids(n)
            .into_iter()
            .map(|m| (m, format!("c{}", rng.gen_range(0..clusters))))
            .collect(),
    }
}

/// Unit vectors around one random center per gold cluster.
pub fn clustered_embeddings(gold: &Partition, dim: usize, seed: u64) -> Vec<MentionEmbedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = std::collections::BTreeMap::new();
    gold.assignment
        .iter()
        .map(|(m, c)| {
            let center = centers
                .entry(c.clone())
                .or_insert_with(|| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())
                .clone();
            let mut v: Vec<f64> = center.iter().map(|x| x + rng.gen_range(-0.3..0.3)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
            MentionEmbedding {
                mention_id: m.clone(),
                vector: v,
            }
        })
        .collect()
}

/// Gold agreement blurred by pair-specific noise, so merges are neither
/// all accepted nor all rejected. Answers for any pair, listed or not.
pub struct NoisyScorer<'a> {
    pub gold: &'a Partition,
    pub seed: u64,
}

impl CandidateScorer for NoisyScorer<'_> {
    fn probability(&self, pair: &CandidatePair) -> cdcr_core::Result<f64> {
        let mut hasher = DefaultHasher::new();
        (self.seed, pair.a(), pair.b()).hash(&mut hasher);
        let mut rng = ChaCha8Rng::seed_from_u64(hasher.finish());
        let same = self.gold.cluster_of(pair.a()) == self.gold.cluster_of(pair.b());
        let base = if same { 0.8 } else { 0.2 };
        Ok((base + rng.gen_range(-0.35..0.35f64)).clamp(0.0, 1.0))
    }
}
