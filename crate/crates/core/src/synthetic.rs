//! Seeded generator for small tagged event corpora with known gold clusters.
//!
//! Every cluster owns a participant, a day and a city. Trigger words are
//! shared between groups of clusters, so the trigger alone never identifies a
//! cluster. The mention sentence carries the trigger and, usually, the
//! participant; the sentence after it carries the time and location, which
//! are tagged. Filler-only background sentences pad the context windows, and
//! a fraction of participants, days and cities are swapped for another
//! cluster's to act as distractors.
//!
//! Two corpora built from the same config with different `sample_seed`s
//! describe the same events with different surface samples, which is how the
//! train/test split of the acceptance suite is formed.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Mention, MentionType, Sentence, TokenTag};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::pairwise::PairwiseConfig;
use crate::pipeline::{AblationConfig, CorpusPaths, PipelineConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub mentions_per_cluster: usize,
    pub documents: usize,
    /// Number of distinct trigger words; cluster `c` uses trigger `c % triggers`.
    pub triggers: usize,
    /// Filler-only sentences after each mention's context sentence.
    pub background_sentences: usize,
    pub filler_vocabulary: usize,
    pub filler_per_sentence: usize,
    /// Probability that the mention sentence names the participant at all.
    pub participant_rate: f64,
    /// Probability that a cue is replaced by another cluster's.
    pub distractor_rate: f64,
    /// Seed for the cluster inventory (shared between splits).
    pub seed: u64,
    /// Seed for the surface sample.
    pub sample_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            clusters: 40,
            mentions_per_cluster: 5,
            documents: 20,
            triggers: 10,
            background_sentences: 1,
            filler_vocabulary: 300,
            filler_per_sentence: 6,
            participant_rate: 0.7,
            distractor_rate: 0.1,
            seed: 0,
            sample_seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("clusters", self.clusters),
            ("mentions_per_cluster", self.mentions_per_cluster),
            ("documents", self.documents),
            ("triggers", self.triggers),
            ("filler_vocabulary", self.filler_vocabulary),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("synthetic.{name} must be positive")));
            }
        }
        if self.mentions_per_cluster > self.documents {
            return Err(Error::InvalidConfig(
                "synthetic.mentions_per_cluster cannot exceed synthetic.documents".into(),
            ));
        }
        for (name, p) in [
            ("participant_rate", self.participant_rate),
            ("distractor_rate", self.distractor_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("synthetic.{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

const TRIGGERS: [&str; 12] = [
    "attack", "election", "earthquake", "merger", "arrest", "fire", "strike", "launch", "trial", "flood",
    "resignation", "protest",
];

struct Inventory {
    trigger: Vec<String>,
    participant: Vec<String>,
    day: Vec<String>,
    city: Vec<String>,
}

impl Inventory {
    fn new(config: &SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let trigger_words: Vec<String> = (0..config.triggers)
            .map(|t| match TRIGGERS.get(t) {
                Some(w) => (*w).to_owned(),
                None => format!("event{t}"),
            })
            .collect();
        // Shuffled ids decouple cue names from cluster numbers.
        let mut ids: Vec<usize> = (0..config.clusters).collect();
        let mut shuffled = |ids: &mut Vec<usize>| {
            ids.shuffle(&mut rng);
            ids.clone()
        };
        let p = shuffled(&mut ids);
        let d = shuffled(&mut ids);
        let c = shuffled(&mut ids);
        Inventory {
            trigger: (0..config.clusters)
                .map(|k| trigger_words[k % config.triggers].clone())
                .collect(),
            participant: p.iter().map(|i| format!("actor{i}")).collect(),
            day: d.iter().map(|i| format!("day{i}")).collect(),
            city: c.iter().map(|i| format!("city{i}")).collect(),
        }
    }
}

/// Builds the corpus. Cluster `c`'s mentions land in distinct documents, and
/// every document receives the same number of mentions when the counts
/// divide evenly.
pub fn generate(config: &SyntheticConfig) -> Result<Corpus> {
    config.validate()?;
    let inventory = Inventory::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.sample_seed ^ 0x5eed_5eed_5eed_5eed);
    let stride = (config.documents / config.mentions_per_cluster).max(1);
    let mut placements: Vec<Vec<(usize, usize)>> = vec![Vec::new(); config.documents];
    for c in 0..config.clusters {
        for j in 0..config.mentions_per_cluster {
            placements[(c + j * stride) % config.documents].push((c, j));
        }
    }
    let filler = |rng: &mut ChaCha8Rng| format!("w{}", rng.gen_range(0..config.filler_vocabulary));
    let pick = |rng: &mut ChaCha8Rng, own: usize, cues: &[String]| -> String {
        if config.clusters > 1 && rng.gen_bool(config.distractor_rate) {
            let other = (own + rng.gen_range(1..config.clusters)) % config.clusters;
            cues[other].clone()
        } else {
            cues[own].clone()
        }
    };

    let mut documents = Vec::with_capacity(config.documents);
    for (d, mut slots) in placements.into_iter().enumerate() {
        slots.shuffle(&mut rng);
        let doc_id = format!("doc{d:03}");
        let mut sentences = Vec::with_capacity((2 + config.background_sentences) * slots.len());
        let mut mentions = Vec::with_capacity(slots.len());
        for (c, j) in slots {
            let mut tokens: Vec<(String, BTreeSet<TokenTag>)> = Vec::new();
            let untagged = BTreeSet::new;
            if rng.gen_bool(config.participant_rate) {
                let who = pick(&mut rng, c, &inventory.participant);
                tokens.push((who, [TokenTag::Entity].into()));
            }
            let start = tokens.len();
            tokens.push((inventory.trigger[c].clone(), [TokenTag::Event].into()));
            mentions.push(Mention {
                mention_id: format!("m{c:03}_{j}"),
                doc_id: doc_id.clone(),
                sentence_idx: sentences.len(),
                start_tok: start,
                end_tok: start,
                mention_type: MentionType::Event,
                gold_cluster_id: Some(format!("c{c:03}")),
            });
            sentences.push(sentence(tokens));

            let mut context: Vec<(String, BTreeSet<TokenTag>)> = Vec::new();
            context.push(("on".into(), untagged()));
            context.push((pick(&mut rng, c, &inventory.day), [TokenTag::Time].into()));
            context.push(("in".into(), untagged()));
            context.push((pick(&mut rng, c, &inventory.city), [TokenTag::Location].into()));
            sentences.push(sentence(context));
            for _ in 0..config.background_sentences {
                let noise = (0..config.filler_per_sentence)
                    .map(|_| (filler(&mut rng), untagged()))
                    .collect();
                sentences.push(sentence(noise));
            }
        }
        documents.push(Document {
            doc_id,
            topic_id: None,
            sentences,
            mentions,
        });
    }
    Corpus::new(format!("synthetic{}", config.sample_seed), documents)
}

/// Writes train, dev and test samples of `base` (sample seeds `s`, `s + 1`,
/// `s + 2`) and a matching `config.json` into `dir`, and returns the config
/// as [`PipelineConfig::read`] resolves it. The learning rates suit this
/// corpus; the library defaults are far too small for it.
pub fn write_bundle(dir: &Path, base: &SyntheticConfig) -> Result<PipelineConfig> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    for (split, offset) in [("train", 0), ("dev", 1), ("test", 2)] {
        let corpus = generate(&SyntheticConfig {
            sample_seed: base.sample_seed.wrapping_add(offset),
            ..base.clone()
        })?;
        let path = dir.join(format!("{split}.jsonl"));
        std::fs::write(&path, corpus.to_jsonl()).map_err(|e| Error::from(e).at_path(&path))?;
    }
    let config = PipelineConfig {
        corpora: vec![CorpusPaths {
            corpus_id: "synthetic".into(),
            train: Some("train.jsonl".into()),
            dev: Some("dev.jsonl".into()),
            test: Some("test.jsonl".into()),
        }],
        mention_type: MentionType::Event,
        encoder: EncoderConfig {
            feature_space_size: 1 << 16,
            learning_rate: 20.0,
            ..EncoderConfig::default()
        },
        pairwise: PairwiseConfig {
            learning_rate: 0.5,
            epochs: 20,
            ..PairwiseConfig::default()
        },
        ablation: AblationConfig {
            mask_tag_sets: vec![
                BTreeSet::new(),
                [TokenTag::Time, TokenTag::Location].into(),
                TokenTag::ALL.into(),
            ],
            window_sweep: vec![0, 1, 2, 3],
        },
        seed: 0,
        output_dir: "out".into(),
    };
    let path = dir.join("config.json");
    std::fs::write(&path, config.to_json() + "\n").map_err(|e| Error::from(e).at_path(&path))?;
    PipelineConfig::read(&path)
}

fn sentence(tagged: Vec<(String, BTreeSet<TokenTag>)>) -> Sentence {
    let (tokens, tags): (Vec<_>, Vec<_>) = tagged.into_iter().unzip();
    Sentence::new(tokens).with_tags(tags)
}
