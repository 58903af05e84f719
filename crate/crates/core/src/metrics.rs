//! Coreference evaluation: MUC, B-cubed, CEAFe, LEA and CoNLL F1.
//!
//! Every metric compares a gold and a predicted [`Partition`] over the same
//! mention set. Undefined ratios (0/0) evaluate to 0, and F1 of
//! `(0, 0)` is 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Partition;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(recall: f64, precision: f64) -> Self {
        Prf {
            recall,
            precision,
            f1: f1(recall, precision),
        }
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.recall, self.precision, self.f1)
    }
}

pub fn f1(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_e: Prf,
    pub lea: Prf,
    pub conll_f1: f64,
}

impl MetricReport {
    pub fn table(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>7} {:>7} {:>7}", "metric", "R", "P", "F1")?;
        for (name, m) in [("MUC", self.muc), ("B3", self.b_cubed), ("CEAFe", self.ceaf_e), ("LEA", self.lea)] {
            writeln!(
                f,
                "{:<8} {:>7.2} {:>7.2} {:>7.2}",
                name,
                100.0 * m.recall,
                100.0 * m.precision,
                100.0 * m.f1
            )?;
        }
        write!(f, "{:<8} {:>7} {:>7} {:>7.2}", "CoNLL", "", "", 100.0 * self.conll_f1)
    }
}

/// Clusters of both partitions as index lists, after checking they cover the
/// same mentions.
struct Aligned {
    gold: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    gold_of: Vec<usize>,
    pred_of: Vec<usize>,
}

fn align(gold: &Partition, pred: &Partition) -> Result<Aligned> {
    if gold.assignment.len() != pred.assignment.len()
        || gold.assignment.keys().zip(pred.assignment.keys()).any(|(a, b)| a != b)
    {
        let g: BTreeSet<_> = gold.assignment.keys().collect();
        let p: BTreeSet<_> = pred.assignment.keys().collect();
        let example = g
            .symmetric_difference(&p)
            .next()
            .map_or_else(String::new, |m| format!("e.g. {m}"));
        return Err(Error::MentionSetMismatch(example));
    }
    let index = |p: &Partition| {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut of = Vec::with_capacity(p.assignment.len());
        for (m, c) in p.assignment.values().enumerate() {
            let next = ids.len();
            let k = *ids.entry(c.as_str()).or_insert(next);
            if k == clusters.len() {
                clusters.push(Vec::new());
            }
            clusters[k].push(m);
            of.push(k);
        }
        (clusters, of)
    };
    let (gold_c, gold_of) = index(gold);
    let (pred_c, pred_of) = index(pred);
    Ok(Aligned {
        gold: gold_c,
        pred: pred_c,
        gold_of,
        pred_of,
    })
}

/// `|k ∩ r|` for every pair of clusters, as a sparse map per `k`.
fn overlaps(keys: &[Vec<usize>], response_of: &[usize]) -> Vec<BTreeMap<usize, usize>> {
    keys.iter()
        .map(|k| {
            let mut counts = BTreeMap::new();
            for &m in k {
                *counts.entry(response_of[m]).or_insert(0) += 1;
            }
            counts
        })
        .collect()
}

fn b_cubed_recall(keys: &[Vec<usize>], response_of: &[usize]) -> f64 {
    let n: usize = keys.iter().map(Vec::len).sum();
    let mut total = 0.0;
    for (k, counts) in keys.iter().zip(overlaps(keys, response_of)) {
        // Each mention of k contributes |k ∩ r(m)| / |k|.
        for &c in counts.values() {
            total += (c * c) as f64 / k.len() as f64;
        }
    }
    ratio(total, n as f64)
}

/// Per-mention overlap of its gold and predicted clusters, averaged.
pub fn b_cubed(gold: &Partition, pred: &Partition) -> Result<(f64, f64, f64)> {
    let a = align(gold, pred)?;
    let r = b_cubed_recall(&a.gold, &a.pred_of);
    let p = b_cubed_recall(&a.pred, &a.gold_of);
    Ok((r, p, f1(r, p)))
}

fn muc_recall(keys: &[Vec<usize>], response_of: &[usize]) -> f64 {
    let mut num = 0usize;
    let mut den = 0usize;
    for (k, counts) in keys.iter().zip(overlaps(keys, response_of)) {
        num += k.len() - counts.len();
        den += k.len() - 1;
    }
    ratio(num as f64, den as f64)
}

/// Link-based: the share of key links kept by the response partition.
pub fn muc(gold: &Partition, pred: &Partition) -> Result<(f64, f64, f64)> {
    let a = align(gold, pred)?;
    let r = muc_recall(&a.gold, &a.pred_of);
    let p = muc_recall(&a.pred, &a.gold_of);
    Ok((r, p, f1(r, p)))
}

/// Entity-level CEAF with `phi4(k, r) = 2|k ∩ r| / (|k| + |r|)` under the
/// best one-to-one cluster alignment.
pub fn ceaf_e(gold: &Partition, pred: &Partition) -> Result<(f64, f64, f64)> {
    let a = align(gold, pred)?;
    let overlap = overlaps(&a.gold, &a.pred_of);
    let weights: Vec<Vec<f64>> = a
        .gold
        .iter()
        .zip(&overlap)
        .map(|(g, counts)| {
            (0..a.pred.len())
                .map(|j| {
                    let c = counts.get(&j).copied().unwrap_or(0);
                    2.0 * c as f64 / (g.len() + a.pred[j].len()) as f64
                })
                .collect()
        })
        .collect();
    let similarity = max_weight_assignment(&weights);
    let r = ratio(similarity, a.gold.len() as f64);
    let p = ratio(similarity, a.pred.len() as f64);
    Ok((r, p, f1(r, p)))
}

fn links(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn lea_recall(keys: &[Vec<usize>], response: &[Vec<usize>], response_of: &[usize]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, counts) in keys.iter().zip(overlaps(keys, response_of)) {
        let resolution = if k.len() == 1 {
            // Self-link: resolved only if the response also keeps it alone.
            if response[response_of[k[0]]].len() == 1 {
                1.0
            } else {
                0.0
            }
        } else {
            counts.values().map(|&c| links(c)).sum::<f64>() / links(k.len())
        };
        num += k.len() as f64 * resolution;
        den += k.len() as f64;
    }
    ratio(num, den)
}

/// Link-based entity-aware metric, with self-links for singletons.
pub fn lea(gold: &Partition, pred: &Partition) -> Result<(f64, f64, f64)> {
    let a = align(gold, pred)?;
    let r = lea_recall(&a.gold, &a.pred, &a.pred_of);
    let p = lea_recall(&a.pred, &a.gold, &a.gold_of);
    Ok((r, p, f1(r, p)))
}

/// Mean of the three F1 values.
pub fn conll_mean(muc_f1: f64, b_cubed_f1: f64, ceaf_e_f1: f64) -> f64 {
    (muc_f1 + b_cubed_f1 + ceaf_e_f1) / 3.0
}

pub fn conll_f1(report: &MetricReport) -> f64 {
    conll_mean(report.muc.f1, report.b_cubed.f1, report.ceaf_e.f1)
}

pub fn evaluate(gold: &Partition, pred: &Partition) -> Result<MetricReport> {
    let prf = |(r, p, _): (f64, f64, f64)| Prf::new(r, p);
    let mut report = MetricReport {
        muc: prf(muc(gold, pred)?),
        b_cubed: prf(b_cubed(gold, pred)?),
        ceaf_e: prf(ceaf_e(gold, pred)?),
        lea: prf(lea(gold, pred)?),
        conll_f1: 0.0,
    };
    report.conll_f1 = conll_f1(&report);
    Ok(report)
}

/// Maximum total weight of a one-to-one assignment of rows to columns
/// (Hungarian method on the negated, zero-padded square matrix).
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return 0.0;
    }
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -weights[i][j]
        } else {
            0.0
        }
    };
    // 1-based potentials; way[j] is the previous column on the augmenting path.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n)
        .filter(|&j| matched[j] >= 1 && matched[j] <= rows && j <= cols)
        .map(|j| weights[matched[j] - 1][j - 1])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(clusters: &[&[&str]]) -> Partition {
        Partition::from_clusters(clusters.iter().map(|c| c.iter().copied()))
    }

    fn close(a: (f64, f64, f64), b: (f64, f64, f64)) {
        let ok = (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12;
        assert!(ok, "{a:?} != {b:?}");
    }

    #[test]
    fn perfect_prediction() {
        let g = p(&[&["a", "b"], &["c"]]);
        close(b_cubed(&g, &g).unwrap(), (1.0, 1.0, 1.0));
        close(muc(&g, &g).unwrap(), (1.0, 1.0, 1.0));
        close(ceaf_e(&g, &g).unwrap(), (1.0, 1.0, 1.0));
        close(lea(&g, &g).unwrap(), (1.0, 1.0, 1.0));
        assert_eq!(evaluate(&g, &g).unwrap().conll_f1, 1.0);
    }

    #[test]
    fn over_merge_example() {
        // gold {a,b},{c}; pred {a,b,c}
        let g = p(&[&["a", "b"], &["c"]]);
        let r = p(&[&["a", "b", "c"]]);
        close(b_cubed(&g, &r).unwrap(), (1.0, 5.0 / 9.0, 5.0 / 7.0));
        close(muc(&g, &r).unwrap(), (1.0, 0.5, 2.0 / 3.0));
        close(ceaf_e(&g, &r).unwrap(), (0.4, 0.8, 8.0 / 15.0));
        close(lea(&g, &r).unwrap(), (2.0 / 3.0, 1.0 / 3.0, 4.0 / 9.0));
    }

    #[test]
    fn singletons_against_a_pair() {
        let g = p(&[&["a", "b"]]);
        let r = p(&[&["a"], &["b"]]);
        close(b_cubed(&g, &r).unwrap(), (0.5, 1.0, 2.0 / 3.0));
        assert_eq!(lea(&g, &r).unwrap().0, 0.0);
    }

    #[test]
    fn no_links_anywhere() {
        let g = p(&[&["a"], &["b"], &["c"]]);
        close(muc(&g, &g).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn conll_values() {
        assert_eq!(conll_mean(1.0, 1.0, 1.0), 1.0);
        assert!((conll_mean(0.6, 0.9, 0.9) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn mismatched_mentions() {
        let g = p(&[&["a", "b"]]);
        let r = p(&[&["a", "c"]]);
        assert!(matches!(b_cubed(&g, &r), Err(Error::MentionSetMismatch(_))));
        assert!(matches!(evaluate(&g, &p(&[&["a"]])), Err(Error::MentionSetMismatch(_))));
    }

    #[test]
    fn assignment_small_cases() {
        assert_eq!(max_weight_assignment(&[]), 0.0);
        assert_eq!(max_weight_assignment(&[vec![0.3]]), 0.3);
        // Greedy would take 0.9 and then 0.1; the optimum is 0.8 + 0.8.
        let w = vec![vec![0.9, 0.8], vec![0.8, 0.1]];
        assert!((max_weight_assignment(&w) - 1.6).abs() < 1e-12);
        // Rectangular both ways.
        let w = vec![vec![0.2, 0.7, 0.1]];
        assert!((max_weight_assignment(&w) - 0.7).abs() < 1e-12);
        let w = vec![vec![0.2], vec![0.7], vec![0.1]];
        assert!((max_weight_assignment(&w) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn table_formatting() {
        let g = p(&[&["a", "b"], &["c"]]);
        let t = evaluate(&g, &g).unwrap().table();
        assert!(t.contains("CEAFe"));
        assert!(t.lines().last().unwrap().contains("100.00"));
    }
}
