use std::collections::BTreeMap;

use crate::corpus::{context_window, ContextWindow, Corpus};
use crate::error::{Error, Result};
use crate::hashing::fnv1a;

use super::params::View;

/// Tokens on each side of the span that get boundary-neighborhood features.
const BOUNDARY_REACH: usize = 3;

const MENTION_WEIGHT: f64 = 1.0;
const BOUNDARY_WEIGHT: f64 = 0.75;
const WINDOW_WEIGHT: f64 = 0.5;

/// Hashed sparse features for the two boundary views, each sorted by index
/// and L2-normalized.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub start: Vec<(u32, f64)>,
    pub end: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn view(&self, view: View) -> &[(u32, f64)] {
        match view {
            View::Start => &self.start,
            View::End => &self.end,
        }
    }

    pub fn scaled(&self, alpha: f64) -> FeatureVector {
        let scale = |v: &[(u32, f64)]| v.iter().map(|&(i, w)| (i, alpha * w)).collect();
        FeatureVector {
            start: scale(&self.start),
            end: scale(&self.end),
        }
    }

    /// Index-wise sum of two feature vectors.
    pub fn sum(&self, other: &FeatureVector) -> FeatureVector {
        let add = |a: &[(u32, f64)], b: &[(u32, f64)]| {
            let mut acc: BTreeMap<u32, f64> = a.iter().copied().collect();
            for &(i, w) in b {
                *acc.entry(i).or_default() += w;
            }
            acc.into_iter().collect()
        };
        FeatureVector {
            start: add(&self.start, &other.start),
            end: add(&self.end, &other.end),
        }
    }

    pub fn max_index(&self) -> Option<u32> {
        self.start.iter().chain(&self.end).map(|&(i, _)| i).max()
    }
}

struct Accumulator {
    space: u64,
    view: &'static str,
    weights: BTreeMap<u32, f64>,
}

impl Accumulator {
    fn new(space: usize, view: &'static str) -> Self {
        Accumulator {
            space: space as u64,
            view,
            weights: BTreeMap::new(),
        }
    }

    fn add(&mut self, parts: &[&str], weight: f64) {
        let mut key = Vec::with_capacity(parts.len() + 1);
        key.push(self.view);
        key.extend_from_slice(parts);
        let idx = (fnv1a(&key) % self.space) as u32;
        *self.weights.entry(idx).or_default() += weight;
    }

    fn ngrams(&mut self, prefix: &str, tokens: &[String], weight: f64) {
        for t in tokens {
            self.add(&[prefix, "1", t], weight);
        }
        for pair in tokens.windows(2) {
            self.add(&[prefix, "2", &pair[0], &pair[1]], weight);
        }
    }

    fn finish(self) -> Vec<(u32, f64)> {
        let norm = self.weights.values().map(|w| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Vec::new();
        }
        self.weights.into_iter().map(|(i, w)| (i, w / norm)).collect()
    }
}

fn lowercase(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Builds the start/end boundary features of a mention from its context
/// window of radius `w`.
pub fn featurize_mention(
    corpus: &Corpus,
    mention_id: &str,
    w: usize,
    feature_space_size: usize,
) -> Result<FeatureVector> {
    if feature_space_size == 0 {
        return Err(Error::InvalidConfig("feature_space_size must be positive".into()));
    }
    let window = context_window(corpus, mention_id, w)?;
    Ok(featurize_window(&window, feature_space_size))
}

pub(crate) fn featurize_window(window: &ContextWindow, feature_space_size: usize) -> FeatureVector {
    let tokens = lowercase(&window.tokens);
    let span = &tokens[window.mention_start..=window.mention_end];
    let left = &tokens[window.mention_start.saturating_sub(BOUNDARY_REACH)..window.mention_start];
    let right_end = (window.mention_end + 1 + BOUNDARY_REACH).min(tokens.len());
    let right = &tokens[window.mention_end + 1..right_end];

    let mut start = Accumulator::new(feature_space_size, "S");
    let mut end = Accumulator::new(feature_space_size, "E");

    for acc in [&mut start, &mut end] {
        acc.ngrams("span", span, MENTION_WEIGHT);
    }
    start.add(&["first", &span[0]], MENTION_WEIGHT);
    end.add(&["last", &span[span.len() - 1]], MENTION_WEIGHT);

    start.ngrams("left", left, BOUNDARY_WEIGHT);
    for (d, t) in left.iter().rev().enumerate() {
        start.add(&["left@", &(d + 1).to_string(), t], BOUNDARY_WEIGHT);
    }
    end.ngrams("right", right, BOUNDARY_WEIGHT);
    for (d, t) in right.iter().enumerate() {
        end.add(&["right@", &(d + 1).to_string(), t], BOUNDARY_WEIGHT);
    }

    // Window n-grams, bucketed by mention sentence vs. context. Bigrams do
    // not cross sentence boundaries.
    let mut begin = 0;
    while begin < tokens.len() {
        let offset = window.sentence_offsets[begin];
        let mut stop = begin;
        while stop < tokens.len() && window.sentence_offsets[stop] == offset {
            stop += 1;
        }
        let bucket = format!("win@{offset}");
        for acc in [&mut start, &mut end] {
            acc.ngrams(&bucket, &tokens[begin..stop], WINDOW_WEIGHT);
        }
        begin = stop;
    }

    FeatureVector {
        start: start.finish(),
        end: end.finish(),
    }
}
