//! Brute-force reference implementations and fixtures shared by the
//! integration tests. Everything here is written from the metric and
//! algorithm definitions, without reusing library internals.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cdcr_core::pipeline::PipelineConfig;
use cdcr_core::synthetic::{self, SyntheticConfig};
use cdcr_core::{CandidatePair, Partition, ScoreTable, ScoredPair};
use rand::Rng;

/// Member sets of a partition.
pub fn entities(p: &Partition) -> Vec<BTreeSet<String>> {
    let mut by_id: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for (m, c) in &p.assignment {
        by_id.entry(c).or_default().insert(m.clone());
    }
    by_id.into_values().collect()
}

fn entity_of<'a>(es: &'a [BTreeSet<String>], m: &str) -> &'a BTreeSet<String> {
    es.iter().find(|e| e.contains(m)).expect("mention present")
}

fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub fn f1(r: f64, p: f64) -> f64 {
    if r + p == 0.0 {
        0.0
    } else {
        2.0 * r * p / (r + p)
    }
}

fn prf(r: f64, p: f64) -> (f64, f64, f64) {
    (r, p, f1(r, p))
}

pub fn brute_b_cubed(gold: &Partition, pred: &Partition) -> (f64, f64, f64) {
    let (k, s) = (entities(gold), entities(pred));
    let n = gold.assignment.len() as f64;
    let mut r = 0.0;
    let mut p = 0.0;
    for m in gold.assignment.keys() {
        let (gk, rs) = (entity_of(&k, m), entity_of(&s, m));
        let common = gk.intersection(rs).count() as f64;
        r += common / gk.len() as f64;
        p += common / rs.len() as f64;
    }
    prf(div(r, n), div(p, n))
}

/// Number of response entities a key entity is split across.
fn parts(key: &BTreeSet<String>, response: &[BTreeSet<String>]) -> usize {
    response.iter().filter(|r| !r.is_disjoint(key)).count()
}

pub fn brute_muc(gold: &Partition, pred: &Partition) -> (f64, f64, f64) {
    let (k, s) = (entities(gold), entities(pred));
    let side = |keys: &[BTreeSet<String>], resp: &[BTreeSet<String>]| {
        let num: usize = keys.iter().map(|e| e.len() - parts(e, resp)).sum();
        let den: usize = keys.iter().map(|e| e.len() - 1).sum();
        div(num as f64, den as f64)
    };
    prf(side(&k, &s), side(&s, &k))
}

fn phi4(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Best one-to-one alignment by dynamic programming over subsets of the
/// smaller side.
fn best_alignment(k: &[BTreeSet<String>], s: &[BTreeSet<String>]) -> f64 {
    let (rows, cols) = if k.len() >= s.len() { (k, s) } else { (s, k) };
    let mut best = vec![f64::NEG_INFINITY; 1 << cols.len()];
    best[0] = 0.0;
    for row in rows {
        let mut next = best.clone();
        for mask in 0..best.len() {
            if best[mask] == f64::NEG_INFINITY {
                continue;
            }
            for (j, col) in cols.iter().enumerate() {
                if mask & (1 << j) == 0 {
                    let v = best[mask] + phi4(row, col);
                    let slot = &mut next[mask | (1 << j)];
                    if v > *slot {
                        *slot = v;
                    }
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(0.0, f64::max)
}

pub fn brute_ceaf_e(gold: &Partition, pred: &Partition) -> (f64, f64, f64) {
    let (k, s) = (entities(gold), entities(pred));
    let sim = best_alignment(&k, &s);
    prf(div(sim, k.len() as f64), div(sim, s.len() as f64))
}

/// Coreference links of an entity; a singleton contributes its self-link.
fn entity_links(e: &BTreeSet<String>) -> BTreeSet<(String, String)> {
    let v: Vec<&String> = e.iter().collect();
    if v.len() == 1 {
        return [(v[0].clone(), v[0].clone())].into();
    }
    let mut out = BTreeSet::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            out.insert((v[i].clone(), v[j].clone()));
        }
    }
    out
}

pub fn brute_lea(gold: &Partition, pred: &Partition) -> (f64, f64, f64) {
    let (k, s) = (entities(gold), entities(pred));
    let side = |keys: &[BTreeSet<String>], resp: &[BTreeSet<String>]| {
        let resp_links: BTreeSet<(String, String)> = resp.iter().flat_map(entity_links).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        for e in keys {
            let own = entity_links(e);
            let kept = own.intersection(&resp_links).count() as f64;
            num += e.len() as f64 * kept / own.len() as f64;
            den += e.len() as f64;
        }
        div(num, den)
    };
    prf(side(&k, &s), side(&s, &k))
}

pub fn brute_conll(gold: &Partition, pred: &Partition) -> f64 {
    (brute_muc(gold, pred).2 + brute_b_cubed(gold, pred).2 + brute_ceaf_e(gold, pred).2) / 3.0
}

/// A random partition of `m0..m{n-1}` with cluster labels `prefix{i}`.
pub fn random_partition(rng: &mut impl Rng, n: usize, prefix: &str) -> Partition {
    let max_clusters = rng.gen_range(1..=n.max(1));
    let mut assignment = BTreeMap::new();
    for i in 0..n {
        let c = rng.gen_range(0..max_clusters);
        assignment.insert(format!("m{i}"), format!("{prefix}{c}"));
    }
    Partition { assignment }
}

pub fn mention_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("m{i}")).collect()
}

/// The greedy merge pass with nothing cached and no disjoint-set structure: clusters
/// are plain member lists searched linearly, and every cluster comparison
/// reads the full score matrix.
pub fn brute_cluster(mentions: &[String], scores: &BTreeMap<(String, String), f64>) -> Partition {
    let score = |a: &str, b: &str| {
        let key = if a < b { (a.to_owned(), b.to_owned()) } else { (b.to_owned(), a.to_owned()) };
        scores[&key]
    };
    let order = |m: &str| mentions.iter().position(|x| x == m).expect("known mention");
    let mut edges: Vec<(&(String, String), f64)> = scores.iter().map(|(k, &v)| (k, v)).filter(|&(_, v)| v >= 0.5).collect();
    edges.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    let mut clusters: Vec<Vec<String>> = mentions.iter().map(|m| vec![m.clone()]).collect();
    for ((a, b), _) in edges {
        let i = clusters.iter().position(|c| c.contains(a)).unwrap();
        let j = clusters.iter().position(|c| c.contains(b)).unwrap();
        if i == j {
            continue;
        }
        let mut total = 0.0;
        for x in &clusters[i] {
            for y in &clusters[j] {
                total += score(x, y);
            }
        }
        if total / (clusters[i].len() * clusters[j].len()) as f64 > 0.5 {
            let moved = clusters.remove(j);
            let i = if j < i { i - 1 } else { i };
            clusters[i].extend(moved);
            clusters[i].sort_by_key(|m| order(m));
        }
    }
    Partition::from_clusters(clusters)
}

/// Complete score matrix over `mentions`. With `grid`, scores are
/// multiples of 1/16 so sums are exact and ties are common.
pub fn random_scores(rng: &mut impl Rng, mentions: &[String], grid: bool) -> BTreeMap<(String, String), f64> {
    let mut out = BTreeMap::new();
    for i in 0..mentions.len() {
        for j in i + 1..mentions.len() {
            let s = if grid {
                rng.gen_range(0..=16) as f64 / 16.0
            } else {
                rng.gen::<f64>()
            };
            let (a, b) = (&mentions[i], &mentions[j]);
            let key = if a < b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            out.insert(key, s);
        }
    }
    out
}

pub fn score_table(scores: &BTreeMap<(String, String), f64>) -> (ScoreTable, Vec<ScoredPair>) {
    let records: Vec<_> = scores
        .iter()
        .map(|((a, b), &s)| cdcr_core::retrieval::PairRecord {
            a: a.clone(),
            b: b.clone(),
            label: None,
            score: Some(s),
        })
        .collect();
    let table = cdcr_core::pairwise::load_external_scores(&records).unwrap();
    let scored = scores
        .iter()
        .map(|((a, b), &s)| ScoredPair {
            pair: CandidatePair::new(a.as_str(), b.as_str()).unwrap(),
            probability: s,
        })
        .collect();
    (table, scored)
}

/// Synthetic bundle (train/dev/test and config) in `dir`.
pub fn synthetic_bundle(dir: &Path) -> PipelineConfig {
    synthetic::write_bundle(dir, &SyntheticConfig::default()).expect("bundle")
}

/// Connected components of gold clusters restricted to the coreferent
/// candidate pairs: the best partition any scorer could reach.
pub fn reachable_partition(gold: &Partition, pairs: &BTreeSet<CandidatePair>) -> Partition {
    let ids: Vec<&String> = gold.assignment.keys().collect();
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let mut parent: Vec<usize> = (0..ids.len()).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    for p in pairs {
        if gold.cluster_of(p.a()) == gold.cluster_of(p.b()) {
            let (x, y) = (root(&mut parent, pos[p.a()]), root(&mut parent, pos[p.b()]));
            parent[x] = y;
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, m) in ids.iter().enumerate() {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push((*m).clone());
    }
    Partition::from_clusters(groups.into_values())
}
