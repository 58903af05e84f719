//! Greedy agglomerative clustering over the candidate graph.
//!
//! Pairs scoring below one half are dropped and the rest are visited once,
//! most probable first. Each visit looks up the current clusters of the two
//! endpoints and merges them when the mean probability over all cross-cluster
//! mention pairs is strictly above one half. Only clusters joined by a
//! retrieved edge are ever compared, so the full score matrix is never built.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Partition;
use crate::error::{Error, Result};
use crate::pairwise::{CandidateScorer, ScoredPair};
use crate::retrieval::CandidatePair;

/// Pairs below this probability are discarded before merging.
pub const PAIR_THRESHOLD: f64 = 0.5;
/// Clusters merge when their mean cross-pair score is strictly above this.
pub const MERGE_THRESHOLD: f64 = 0.5;

/// Keeps pairs with probability `>= 0.5`, sorted by descending probability
/// and then by ascending pair.
pub fn filter_and_sort_pairs(scored: &[ScoredPair]) -> Vec<ScoredPair> {
    let mut kept: Vec<ScoredPair> = scored
        .iter()
        .filter(|s| s.probability >= PAIR_THRESHOLD)
        .cloned()
        .collect();
    kept.sort_by(|x, y| {
        y.probability
            .total_cmp(&x.probability)
            .then_with(|| x.pair.cmp(&y.pair))
    });
    kept
}

/// Disjoint sets over mention positions with explicit member lists, plus a
/// cache of pair probabilities.
pub struct ClusterState<'s> {
    ids: Vec<String>,
    position: HashMap<String, usize>,
    parent: Vec<usize>,
    /// Members of each root, ascending by position; empty for non-roots.
    members: Vec<Vec<usize>>,
    cache: HashMap<CandidatePair, f64>,
    scorer: &'s dyn CandidateScorer,
}

impl<'s> ClusterState<'s> {
    pub fn singletons<S: AsRef<str>>(mentions: &[S], scorer: &'s dyn CandidateScorer) -> Result<Self> {
        let mut position = HashMap::with_capacity(mentions.len());
        let ids: Vec<String> = mentions.iter().map(|m| m.as_ref().to_owned()).collect();
        for (i, id) in ids.iter().enumerate() {
            if position.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(ClusterState {
            parent: (0..ids.len()).collect(),
            members: (0..ids.len()).map(|i| vec![i]).collect(),
            ids,
            position,
            cache: HashMap::new(),
            scorer,
        })
    }

    pub fn remember(&mut self, scored: &ScoredPair) {
        self.cache.insert(scored.pair.clone(), scored.probability);
    }

    pub fn cached_pairs(&self) -> usize {
        self.cache.len()
    }

    pub fn position(&self, mention_id: &str) -> Result<usize> {
        self.position
            .get(mention_id)
            .copied()
            .ok_or_else(|| Error::UnknownMention(mention_id.to_owned()))
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Display name of a cluster: the id of its root mention.
    pub fn cluster_name(&self, root: usize) -> &str {
        &self.ids[root]
    }

    pub fn members(&self, root: usize) -> &[usize] {
        &self.members[root]
    }

    fn pair_probability(&mut self, x: usize, y: usize) -> Result<f64> {
        let pair = CandidatePair::new(self.ids[x].as_str(), self.ids[y].as_str())?;
        if let Some(&p) = self.cache.get(&pair) {
            return Ok(p);
        }
        let p = self.scorer.probability(&pair)?;
        self.cache.insert(pair, p);
        Ok(p)
    }

    /// Mean probability over all mention pairs across two distinct clusters.
    pub fn cluster_pair_score(&mut self, ci: usize, cj: usize) -> Result<f64> {
        let (ri, rj) = (self.find(ci), self.find(cj));
        if ri == rj {
            return Err(Error::InvalidConfig("cluster_pair_score of a cluster with itself".into()));
        }
        let left = self.members[ri].clone();
        let right = self.members[rj].clone();
        let mut total = 0.0;
        for &m in &left {
            for &n in &right {
                total += self.pair_probability(m, n)?;
            }
        }
        Ok(total / (left.len() * right.len()) as f64)
    }

    /// Union by size; returns the surviving root.
    pub fn merge(&mut self, ci: usize, cj: usize) -> usize {
        let (mut ri, mut rj) = (self.find(ci), self.find(cj));
        if ri == rj {
            return ri;
        }
        if self.members[ri].len() < self.members[rj].len() {
            std::mem::swap(&mut ri, &mut rj);
        }
        let absorbed = std::mem::take(&mut self.members[rj]);
        let kept = std::mem::take(&mut self.members[ri]);
        self.members[ri] = merge_sorted(&kept, &absorbed);
        self.parent[rj] = ri;
        ri
    }

    /// Clusters named `cluster_<n>`, numbered by their lowest member.
    pub fn partition(&mut self) -> Partition {
        let mut groups: Vec<Vec<usize>> = (0..self.ids.len())
            .filter(|&i| self.parent[i] == i)
            .map(|r| self.members[r].clone())
            .collect();
        groups.sort();
        let ids = &self.ids;
        let mut named: Vec<Vec<&str>> = groups
            .iter()
            .map(|g| g.iter().map(|&i| ids[i].as_str()).collect())
            .collect();
        for g in &mut named {
            g.sort_unstable();
        }
        named.sort();
        Partition::from_clusters(named)
    }
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// One visited pair of the merge pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub a: String,
    pub b: String,
    pub probability: f64,
    pub cluster_a: String,
    pub cluster_b: String,
    /// `None` when both endpoints were already in the same cluster.
    pub cluster_score: Option<f64>,
    pub merged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeTrace {
    pub steps: Vec<MergeStep>,
}

impl MergeTrace {
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs the merge pass over `mentions`. Scores in `scored` seed the cache;
/// any other cross-cluster pair is asked of `scorer`.
pub fn greedy_cluster<S: AsRef<str>>(
    mentions: &[S],
    scored: &[ScoredPair],
    scorer: &dyn CandidateScorer,
    trace: bool,
) -> Result<(Partition, MergeTrace)> {
    let mut state = ClusterState::singletons(mentions, scorer)?;
    for s in scored {
        state.position(s.pair.a())?;
        state.position(s.pair.b())?;
        state.remember(s);
    }
    let mut log = MergeTrace::default();
    for s in filter_and_sort_pairs(scored) {
        let x = state.position(s.pair.a())?;
        let y = state.position(s.pair.b())?;
        let (ri, rj) = (state.find(x), state.find(y));
        let (cluster_score, merged) = if ri == rj {
            (None, false)
        } else {
            let score = state.cluster_pair_score(ri, rj)?;
            (Some(score), score > MERGE_THRESHOLD)
        };
        if trace {
            log.steps.push(MergeStep {
                a: s.pair.a().to_owned(),
                b: s.pair.b().to_owned(),
                probability: s.probability,
                cluster_a: state.cluster_name(ri).to_owned(),
                cluster_b: state.cluster_name(rj).to_owned(),
                cluster_score,
                merged,
            });
        }
        if merged {
            state.merge(ri, rj);
        }
    }
    Ok((state.partition(), log))
}
