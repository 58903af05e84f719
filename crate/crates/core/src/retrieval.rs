//! Exact inner-product KNN over mention embeddings and candidate pair
//! generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::greedy_cluster;
use crate::corpus::{Corpus, Partition};
use crate::encoder::MentionEmbedding;
use crate::error::{Error, Result};
use crate::metrics::b_cubed;
use crate::pairwise::{CandidateScorer, OracleScorer, ScoredPair};

/// An unordered mention pair, stored with `a < b`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    a: String,
    b: String,
}

impl CandidatePair {
    /// Orients the pair canonically. Self-pairs are rejected.
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Result<Self> {
        let (x, y) = (x.into(), y.into());
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(CandidatePair { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(CandidatePair { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(Error::InvalidConfig(format!("self-pair ({x}, {x})"))),
        }
    }

    pub fn a(&self) -> &str {
        &self.a
    }

    pub fn b(&self) -> &str {
        &self.b
    }
}

impl fmt::Display for CandidatePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Brute-force inner-product index. Insertion order is kept for ties.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f64>,
    positions: HashMap<String, usize>,
}

impl NeighborIndex {
    pub fn build(embeddings: &[MentionEmbedding]) -> Result<Self> {
        let first = embeddings.first().ok_or(Error::EmptyInput("build_index"))?;
        let dim = first.vector.len();
        let mut ids = Vec::with_capacity(embeddings.len());
        let mut vectors = Vec::with_capacity(embeddings.len() * dim);
        let mut positions = HashMap::with_capacity(embeddings.len());
        for (i, e) in embeddings.iter().enumerate() {
            if e.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.vector.len(),
                });
            }
            if positions.insert(e.mention_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.mention_id.clone()));
            }
            ids.push(e.mention_id.clone());
            vectors.extend_from_slice(&e.vector);
        }
        Ok(NeighborIndex {
            dim,
            ids,
            vectors,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn contains(&self, mention_id: &str) -> bool {
        self.positions.contains_key(mention_id)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Top-`k` neighbors of `mention_id` by inner product, excluding itself.
    pub fn query(&self, mention_id: &str, k: usize) -> Result<Vec<(String, f64)>> {
        self.query_filtered(mention_id, k, |_| true)
    }

    /// As [`query`](Self::query), restricted to candidates accepted by `keep`.
    pub fn query_filtered(
        &self,
        mention_id: &str,
        k: usize,
        keep: impl Fn(&str) -> bool,
    ) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        let &q = self
            .positions
            .get(mention_id)
            .ok_or_else(|| Error::UnknownMention(mention_id.to_owned()))?;
        let query = self.vector(q);
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| i != q && keep(&self.ids[i]))
            .map(|i| (crate::encoder::dot(query, self.vector(i)), i))
            .collect();
        // Full sort is fine at the sizes an exact index is meant for.
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(s, i)| (self.ids[i].clone(), s)).collect())
    }
}

pub fn build_index(embeddings: &[MentionEmbedding]) -> Result<NeighborIndex> {
    NeighborIndex::build(embeddings)
}

pub fn query_knn(index: &NeighborIndex, mention_id: &str, k: usize) -> Result<Vec<(String, f64)>> {
    index.query(mention_id, k)
}

/// Union over the corpus mentions of their `k` nearest same-type neighbors
/// among the corpus mentions.
pub fn generate_pairs(corpus: &Corpus, index: &NeighborIndex, k: usize) -> Result<BTreeSet<CandidatePair>> {
    let types: HashMap<&str, _> = corpus
        .mentions()
        .map(|m| (m.mention_id.as_str(), m.mention_type))
        .collect();
    for m in corpus.mentions() {
        if !index.contains(&m.mention_id) {
            return Err(Error::CoverageGap(m.mention_id.clone()));
        }
    }
    let mut pairs = BTreeSet::new();
    for m in corpus.mentions() {
        let neighbors = index.query_filtered(&m.mention_id, k, |id| types.get(id) == Some(&m.mention_type))?;
        for (n, _) in neighbors {
            pairs.insert(CandidatePair::new(m.mention_id.as_str(), n)?);
        }
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecall {
    /// B-cubed recall of oracle clustering over the candidate graph.
    pub recall: f64,
    pub pairs: usize,
    /// Candidate pairs whose endpoints share a gold cluster.
    pub coreferent_pairs: usize,
    /// Coreferent mention pairs in the gold partition.
    pub gold_links: usize,
    pub mentions: usize,
}

/// Upper bound on recall achievable from a candidate set: cluster with a
/// scorer that knows the gold labels and report B-cubed recall.
pub fn pair_recall(pairs: &BTreeSet<CandidatePair>, gold: &Partition) -> Result<PairRecall> {
    let oracle = OracleScorer::new(gold);
    let mut scored = Vec::with_capacity(pairs.len());
    let mut coreferent = 0;
    for p in pairs {
        let s: ScoredPair = oracle.score(p)?;
        if s.probability == 1.0 {
            coreferent += 1;
        }
        scored.push(s);
    }
    let mentions: Vec<&str> = gold.assignment.keys().map(String::as_str).collect();
    let (pred, _) = greedy_cluster(&mentions, &scored, &oracle, false)?;
    let (recall, _, _) = b_cubed(gold, &pred)?;
    let gold_links = gold
        .clusters()
        .values()
        .map(|m| m.len() * (m.len() - 1) / 2)
        .sum();
    Ok(PairRecall {
        recall,
        pairs: pairs.len(),
        coreferent_pairs: coreferent,
        gold_links,
        mentions: mentions.len(),
    })
}

/// One line of a pairs file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub label: Option<u8>,
    pub score: Option<f64>,
}

pub fn write_pairs<W: Write>(mut out: W, records: &[PairRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pairs<R: BufRead>(input: R) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if rec.label.is_some_and(|l| l > 1) {
            return Err(Error::Malformed {
                line: i + 1,
                message: format!("label must be 0 or 1, got {:?}", rec.label),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_pairs_file(path: &Path, records: &[PairRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_pairs(&mut buf, records)?;
    std::fs::write(path, buf).map_err(|e| Error::from(e).at_path(path))
}

pub fn read_pairs_file(path: &Path) -> Result<Vec<PairRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    read_pairs(std::io::BufReader::new(file)).map_err(|e| e.at_path(path))
}

/// Pair records labelled by gold cluster membership, when known.
pub fn label_pairs(pairs: &BTreeSet<CandidatePair>, gold: Option<&Partition>) -> Vec<PairRecord> {
    pairs
        .iter()
        .map(|p| PairRecord {
            a: p.a().to_owned(),
            b: p.b().to_owned(),
            label: gold.and_then(|g| match (g.cluster_of(p.a()), g.cluster_of(p.b())) {
                (Some(x), Some(y)) => Some(u8::from(x == y)),
                _ => None,
            }),
            score: None,
        })
        .collect()
}

/// Pairs from records, checking there are no self-pairs or duplicates.
pub fn pairs_from_records(records: &[PairRecord]) -> Result<BTreeMap<CandidatePair, &PairRecord>> {
    let mut out = BTreeMap::new();
    for r in records {
        let p = CandidatePair::new(r.a.as_str(), r.b.as_str())?;
        if out.insert(p.clone(), r).is_some() {
            return Err(Error::DuplicatePair(p.a().to_owned(), p.b().to_owned()));
        }
    }
    Ok(out)
}
