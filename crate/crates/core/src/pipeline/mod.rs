//! End-to-end orchestration with persisted stage artifacts.
//!
//! Every stage reads its inputs from, and writes its outputs to, a fixed
//! layout under the output directory, so a stage can be re-run on its own.
//!
//! ```text
//! <out>/config.json                    effective configuration
//! <out>/encoder/params.bin             bi-encoder weights
//! <out>/encoder/log.json
//! <out>/train/embeddings.cemb
//! <out>/train/pairs.jsonl              labelled KNN pairs at train_k
//! <out>/pairwise/params.json           scorer weights
//! <out>/pairwise/log.json
//! <out>/index.json                     index manifest
//! <out>/test/<corpus>/embeddings.cemb
//! <out>/test/<corpus>/candidates.jsonl KNN pairs at infer_k
//! <out>/test/<corpus>/scored_pairs.jsonl
//! <out>/test/<corpus>/partition.json
//! <out>/test/<corpus>/trace.jsonl
//! <out>/test/<corpus>/report.json
//! <out>/report.json                    per-corpus reports and summary
//! ```

mod stages;
mod studies;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{merge_corpora, Corpus, MentionType, TokenTag};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::pairwise::PairwiseConfig;

pub use stages::{
    build_index_manifest, cluster_stage, embed_stage, evaluate_stage, gen_pairs_stage, score_pairs_stage,
    train_encoder_stage, train_pairwise_stage, IndexManifest,
};
pub use studies::{
    run_ablations, run_oracle_study, run_oracle_study_at, AblationCell, AblationKind, AblationReport, OracleCorpusReport,
    OracleReport,
};

/// Seed offsets for the stages that draw random numbers.
const ENCODER_SEED_OFFSET: u64 = 1;
const PAIRWISE_SEED_OFFSET: u64 = 2;

/// File locations for one corpus. Each split is optional, but a run needs at
/// least one train and one test split across all corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub corpus_id: String,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub mask_tag_sets: Vec<BTreeSet<TokenTag>>,
    pub window_sweep: Vec<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            mask_tag_sets: vec![BTreeSet::new(), [TokenTag::Time, TokenTag::Location].into()],
            window_sweep: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpora: Vec<CorpusPaths>,
    #[serde(default = "default_mention_type")]
    pub mention_type: MentionType,
    /// `encoder.seed` is derived from `seed` and ignored here.
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// `pairwise.seed` is derived from `seed` and ignored here. Retrieval
    /// depths are `pairwise.train_k` and `pairwise.infer_k`.
    #[serde(default)]
    pub pairwise: PairwiseConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

fn default_mention_type() -> MentionType {
    MentionType::Event
}

impl PipelineConfig {
    /// Parses a JSON config. Relative corpus paths resolve against the
    /// config file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for c in &mut config.corpora {
            for split in [&mut c.train, &mut c.dev, &mut c.test].into_iter().flatten() {
                if split.is_relative() {
                    *split = base.join(&*split);
                }
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Encoder settings with the derived seed.
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            seed: self.seed.wrapping_add(ENCODER_SEED_OFFSET),
            ..self.encoder.clone()
        }
    }

    pub fn pairwise_config(&self) -> PairwiseConfig {
        PairwiseConfig {
            seed: self.seed.wrapping_add(PAIRWISE_SEED_OFFSET),
            ..self.pairwise.clone()
        }
    }

    /// Checks every setting and that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        self.pairwise_config().validate()?;
        if self.corpora.is_empty() {
            return Err(Error::InvalidConfig("no corpora configured".into()));
        }
        let mut ids = BTreeSet::new();
        for c in &self.corpora {
            if c.corpus_id.is_empty() || c.corpus_id.contains(['/', '\\']) || c.corpus_id.starts_with('.') {
                return Err(Error::InvalidConfig(format!(
                    "corpus id {:?} must be a plain directory name",
                    c.corpus_id
                )));
            }
            if !ids.insert(c.corpus_id.as_str()) {
                return Err(Error::InvalidConfig(format!("corpus id {} listed twice", c.corpus_id)));
            }
            for (split, path) in [("train", &c.train), ("dev", &c.dev), ("test", &c.test)] {
                if let Some(path) = path {
                    if !path.is_file() {
                        return Err(Error::InvalidConfig(format!(
                            "{} {split} file {} does not exist",
                            c.corpus_id,
                            path.display()
                        )));
                    }
                }
            }
        }
        if !self.corpora.iter().any(|c| c.train.is_some()) {
            return Err(Error::InvalidConfig("no train split configured".into()));
        }
        if !self.corpora.iter().any(|c| c.test.is_some()) {
            return Err(Error::InvalidConfig("no test split configured".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.output_dir)
    }

    /// The training corpus: the configured mention type of every train
    /// split, merged when there is more than one.
    pub fn load_train(&self) -> Result<Corpus> {
        let mut parts = Vec::new();
        for c in &self.corpora {
            if let Some(path) = &c.train {
                parts.push(load_split(path, &c.corpus_id, self.mention_type)?);
            }
        }
        if parts.len() == 1 {
            Ok(parts.pop().expect("one part"))
        } else {
            merge_corpora(&parts)
        }
    }

    /// Test corpora keyed by corpus id.
    pub fn load_tests(&self) -> Result<BTreeMap<String, Corpus>> {
        let mut out = BTreeMap::new();
        for c in &self.corpora {
            if let Some(path) = &c.test {
                out.insert(c.corpus_id.clone(), load_split(path, &c.corpus_id, self.mention_type)?);
            }
        }
        Ok(out)
    }

    /// Parses the dev splits. They are checked for well-formedness but do
    /// not feed any stage.
    pub fn check_dev(&self) -> Result<()> {
        for c in &self.corpora {
            if let Some(path) = &c.dev {
                load_split(path, &c.corpus_id, self.mention_type)?;
            }
        }
        Ok(())
    }
}

fn load_split(path: &Path, corpus_id: &str, mention_type: MentionType) -> Result<Corpus> {
    let corpus = Corpus::read(path, Some(corpus_id))?.filter_type(mention_type);
    if corpus.mention_count() == 0 {
        return Err(Error::InvalidConfig(format!(
            "{} has no {mention_type} mentions",
            path.display()
        )));
    }
    Ok(corpus)
}

/// Artifact paths under an output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn encoder_params(&self) -> PathBuf {
        self.root.join("encoder").join("params.bin")
    }

    pub fn encoder_log(&self) -> PathBuf {
        self.root.join("encoder").join("log.json")
    }

    pub fn train_embeddings(&self) -> PathBuf {
        self.root.join("train").join("embeddings.cemb")
    }

    pub fn train_pairs(&self) -> PathBuf {
        self.root.join("train").join("pairs.jsonl")
    }

    pub fn pairwise_params(&self) -> PathBuf {
        self.root.join("pairwise").join("params.json")
    }

    pub fn pairwise_log(&self) -> PathBuf {
        self.root.join("pairwise").join("log.json")
    }

    pub fn index_manifest(&self) -> PathBuf {
        self.root.join("index.json")
    }

    pub fn test_dir(&self, corpus_id: &str) -> PathBuf {
        self.root.join("test").join(corpus_id)
    }

    pub fn test_embeddings(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("embeddings.cemb")
    }

    pub fn candidates(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("candidates.jsonl")
    }

    pub fn scored_pairs(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("scored_pairs.jsonl")
    }

    pub fn partition(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("partition.json")
    }

    pub fn trace(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("trace.jsonl")
    }

    pub fn corpus_report(&self, corpus_id: &str) -> PathBuf {
        self.test_dir(corpus_id).join("report.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Harmonic means of per-corpus F1 scores, one per metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSummary {
    pub muc_f1: f64,
    pub b_cubed_f1: f64,
    pub ceaf_e_f1: f64,
    pub lea_f1: f64,
    pub conll_f1: f64,
}

impl HarmonicSummary {
    pub fn over<'a>(reports: impl IntoIterator<Item = &'a MetricReport> + Clone) -> Self {
        let h = |pick: fn(&MetricReport) -> f64| harmonic_mean(reports.clone().into_iter().map(pick));
        HarmonicSummary {
            muc_f1: h(|r| r.muc.f1),
            b_cubed_f1: h(|r| r.b_cubed.f1),
            ceaf_e_f1: h(|r| r.ceaf_e.f1),
            lea_f1: h(|r| r.lea.f1),
            conll_f1: h(|r| r.conll_f1),
        }
    }
}

/// Harmonic mean, 0 if any value is 0 or there are none.
pub fn harmonic_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut inv = 0.0;
    for v in values {
        if v <= 0.0 {
            return 0.0;
        }
        n += 1;
        inv += 1.0 / v;
    }
    if n == 0 {
        0.0
    } else {
        n as f64 / inv
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub corpora: BTreeMap<String, MetricReport>,
    /// Present when more than one test corpus was evaluated.
    pub harmonic_mean: Option<HarmonicSummary>,
}

impl PipelineReport {
    pub fn new(corpora: BTreeMap<String, MetricReport>) -> Self {
        let harmonic_mean = (corpora.len() > 1).then(|| HarmonicSummary::over(corpora.values()));
        PipelineReport { corpora, harmonic_mean }
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at_path(path))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::from(e).at_path(path))
}

/// Runs every stage in order and writes all artifacts. The config and all
/// input files are checked before anything is trained.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    let stage = |s| move |e: Error| e.in_stage(s);
    config.validate().map_err(stage("config"))?;
    let train = config.load_train().map_err(stage("config"))?;
    let tests = config.load_tests().map_err(stage("config"))?;
    config.check_dev().map_err(stage("config"))?;
    for (id, corpus) in &tests {
        corpus
            .gold_partition()
            .map_err(|e| Error::InvalidConfig(format!("test corpus {id}: {e}")))
            .map_err(stage("config"))?;
    }
    let layout = config.layout();
    write_file(&layout.config(), (config.to_json() + "\n").as_bytes()).map_err(stage("config"))?;

    train_encoder_stage(config, &train).map_err(stage("train-encoder"))?;
    embed_stage(config, &train, &tests).map_err(stage("embed"))?;
    build_index_manifest(config, &tests).map_err(stage("build-index"))?;
    gen_pairs_stage(config, &train, &tests).map_err(stage("gen-pairs"))?;
    train_pairwise_stage(config, &train).map_err(stage("train-pairwise"))?;
    score_pairs_stage(config, &tests).map_err(stage("score-pairs"))?;
    cluster_stage(config, &tests).map_err(stage("cluster"))?;
    evaluate_stage(config, &tests).map_err(stage("score"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_mean_basics() {
        assert_eq!(harmonic_mean([]), 0.0);
        assert_eq!(harmonic_mean([0.5]), 0.5);
        assert!((harmonic_mean([1.0, 0.5]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(harmonic_mean([0.9, 0.0]), 0.0);
    }

    #[test]
    fn derived_seeds_differ_per_stage() {
        let config: PipelineConfig =
            serde_json::from_str(r#"{"corpora": [], "output_dir": "out", "seed": 7}"#).unwrap();
        assert_eq!(config.encoder_config().seed, 8);
        assert_eq!(config.pairwise_config().seed, 9);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"corpora": [], "output_dir": "o", "sed": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn missing_files_fail_validation() {
        let config = PipelineConfig {
            corpora: vec![CorpusPaths {
                corpus_id: "x".into(),
                train: Some("/definitely/not/here.jsonl".into()),
                dev: None,
                test: None,
            }],
            mention_type: MentionType::Event,
            encoder: EncoderConfig::default(),
            pairwise: PairwiseConfig::default(),
            ablation: AblationConfig::default(),
            seed: 0,
            output_dir: "out".into(),
        };
        let msg = config.validate().unwrap_err().to_string();
        assert!(msg.contains("does not exist"), "{msg}");
    }
}
