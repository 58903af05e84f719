//! Oracle upper-bound runs and ablation sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{mask_tokens, Corpus, Partition, TokenTag};
use crate::encoder::{embed_corpus, train_encoder, EncoderParams};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};
use crate::pairwise::{mention_vectors, OracleScorer, PairwiseConfig, TrainedScorer};
use crate::retrieval::{pair_recall, pairs_from_records, NeighborIndex, PairRecall, PairRecord};

use super::stages::{
    candidate_records, cluster_records, fit_scorer, persist_embeddings, score_records, write_clustering, write_encoder,
    write_pairs_at,
};
use super::{write_json, PipelineConfig};

/// Loads and checks everything a study needs before any training starts.
fn prepare(config: &PipelineConfig) -> Result<(Corpus, BTreeMap<String, Corpus>)> {
    config.validate()?;
    let train = config.load_train()?;
    let tests = config.load_tests()?;
    config.check_dev()?;
    for (id, corpus) in &tests {
        corpus
            .gold_partition()
            .map_err(|e| Error::InvalidConfig(format!("test corpus {id}: {e}")))?;
    }
    Ok((train, tests))
}

/// Embeds `corpus`, persists the embeddings under `dir` and indexes what
/// was written.
fn index_corpus(encoder: &EncoderParams, corpus: &Corpus, w: usize, dir: &Path) -> Result<NeighborIndex> {
    let embeddings = persist_embeddings(&dir.join("embeddings.cemb"), &embed_corpus(encoder, corpus, w)?)?;
    NeighborIndex::build(&embeddings)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCorpusReport {
    pub pair_recall: PairRecall,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub k: usize,
    pub corpora: BTreeMap<String, OracleCorpusReport>,
}

/// The oracle study at the configured inference depth.
pub fn run_oracle_study(config: &PipelineConfig) -> Result<OracleReport> {
    run_oracle_study_at(config, config.pairwise.infer_k)
}

/// Retrieval with the trained encoder at depth `k`, then clustering with
/// gold-label scores. `k = 0` retrieves nothing, leaving every mention a
/// singleton; `k` at least the corpus size gives the complete graph.
/// Artifacts go to `<out>/oracle/k<k>/`.
pub fn run_oracle_study_at(config: &PipelineConfig, k: usize) -> Result<OracleReport> {
    let stage = |s| move |e: Error| e.in_stage(s);
    let (train, tests) = prepare(config).map_err(stage("config"))?;
    let (encoder, _) = train_encoder(&train, &config.encoder_config()).map_err(stage("train-encoder"))?;
    let root = config.output_dir.join("oracle").join(format!("k{k}"));
    let mut corpora = BTreeMap::new();
    for (id, corpus) in &tests {
        let dir = root.join(id);
        let gold = corpus.gold_partition().map_err(stage("oracle-study"))?;
        let index = index_corpus(&encoder, corpus, config.encoder.window_w, &dir).map_err(stage("embed"))?;
        let records = if k == 0 {
            Vec::new()
        } else {
            candidate_records(corpus, &index, k).map_err(stage("gen-pairs"))?
        };
        write_pairs_at(&dir.join("candidates.jsonl"), &records).map_err(stage("gen-pairs"))?;
        let oracle = OracleScorer::new(&gold);
        let recall = {
            let pairs: BTreeSet<_> = pairs_from_records(&records)
                .map_err(stage("gen-pairs"))?
                .into_keys()
                .collect();
            pair_recall(&pairs, &gold).map_err(stage("oracle-study"))?
        };
        let scored = score_records(&oracle, &records).map_err(stage("score-pairs"))?;
        let (partition, trace) = cluster_records(corpus, &scored, &oracle).map_err(stage("cluster"))?;
        write_clustering(&dir.join("partition.json"), &dir.join("trace.jsonl"), &partition, &trace)
            .map_err(stage("cluster"))?;
        let metrics = evaluate(&gold, &partition).map_err(stage("score"))?;
        log::info!(
            "{id}: oracle at k={k}: pair recall {:.4}, B3 F1 {:.4}",
            recall.recall,
            metrics.b_cubed.f1
        );
        let report = OracleCorpusReport {
            pair_recall: recall,
            metrics,
        };
        write_json(&dir.join("report.json"), &report).map_err(stage("score"))?;
        corpora.insert(id.clone(), report);
    }
    let report = OracleReport { k, corpora };
    write_json(&root.join("report.json"), &report).map_err(stage("score"))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    Baseline,
    Window,
    Mask,
}

/// One pairwise-stage variant evaluated on every test corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub kind: AblationKind,
    pub window_w: usize,
    pub masked_tags: BTreeSet<TokenTag>,
    pub reports: BTreeMap<String, MetricReport>,
    #[serde(skip)]
    pub partitions: BTreeMap<String, Partition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub baseline: AblationCell,
    pub windows: Vec<AblationCell>,
    pub masks: Vec<AblationCell>,
}

impl AblationReport {
    pub fn cells(&self) -> impl Iterator<Item = &AblationCell> {
        std::iter::once(&self.baseline).chain(&self.windows).chain(&self.masks)
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let corpora: Vec<&String> = self.baseline.reports.keys().collect();
        write!(f, "{:<28}", "cell")?;
        for c in &corpora {
            write!(f, " {:>12} {:>12}", format!("{c} B3"), format!("{c} CoNLL"))?;
        }
        for cell in self.cells() {
            write!(f, "\n{:<28}", cell.name)?;
            for c in &corpora {
                let r = &cell.reports[*c];
                write!(f, " {:>12.2} {:>12.2}", 100.0 * r.b_cubed.f1, 100.0 * r.conll_f1)?;
            }
        }
        Ok(())
    }
}

fn mask_name(tags: &BTreeSet<TokenTag>) -> String {
    if tags.is_empty() {
        return "none".into();
    }
    tags.iter()
        .map(|t| serde_json::to_value(t).expect("tag serializes").as_str().unwrap_or("?").to_owned())
        .collect::<Vec<_>>()
        .join("+")
}

struct Shared<'a> {
    encoder: &'a EncoderParams,
    train: &'a Corpus,
    tests: &'a BTreeMap<String, Corpus>,
    train_records: &'a [PairRecord],
    test_records: &'a BTreeMap<String, Vec<PairRecord>>,
}

fn run_cell(
    shared: &Shared<'_>,
    pw: &PairwiseConfig,
    kind: AblationKind,
    name: String,
    tags: &BTreeSet<TokenTag>,
    root: &Path,
) -> Result<AblationCell> {
    let dir = root.join(&name);
    let train = mask_tokens(shared.train, tags, pw.window_w)?;
    let (params, log) = fit_scorer(shared.encoder, &train, shared.train_records, pw)?;
    write_json(&dir.join("pairwise.json"), &params)?;
    write_json(&dir.join("pairwise_log.json"), &log)?;
    let mut reports = BTreeMap::new();
    let mut partitions = BTreeMap::new();
    for (id, corpus) in shared.tests {
        let corpus = mask_tokens(corpus, tags, pw.window_w)?;
        let scorer = TrainedScorer::new(params.clone(), mention_vectors(shared.encoder, &corpus, pw.window_w)?)?;
        let scored = score_records(&scorer, &shared.test_records[id])?;
        let (partition, trace) = cluster_records(&corpus, &scored, &scorer)?;
        let out = dir.join(id);
        write_pairs_at(&out.join("scored_pairs.jsonl"), &scored)?;
        write_clustering(&out.join("partition.json"), &out.join("trace.jsonl"), &partition, &trace)?;
        let report = evaluate(&corpus.gold_partition()?, &partition)?;
        write_json(&out.join("report.json"), &report)?;
        reports.insert(id.clone(), report);
        partitions.insert(id.clone(), partition);
    }
    log::info!("ablation cell {name} done");
    Ok(AblationCell {
        name,
        kind,
        window_w: pw.window_w,
        masked_tags: tags.clone(),
        reports,
        partitions,
    })
}

/// Trains one bi-encoder and one candidate set, then retrains and reruns
/// only the pairwise stage for the baseline, each window in the sweep and
/// each mask set. Artifacts go to `<out>/ablation/`.
pub fn run_ablations(config: &PipelineConfig) -> Result<AblationReport> {
    let stage = |s| move |e: Error| e.in_stage(s);
    let (train, tests) = prepare(config).map_err(stage("config"))?;
    let ablation = &config.ablation;
    if ablation.mask_tag_sets.iter().any(|s| !s.is_empty()) {
        for corpus in std::iter::once(&train).chain(tests.values()) {
            if !corpus.has_tags() {
                return Err(Error::InvalidConfig(format!(
                    "mask ablation requested but corpus {} carries no token tags",
                    corpus.corpus_id
                ))
                .in_stage("config"));
            }
        }
    }
    let root = config.output_dir.join("ablation");
    let (encoder, log) = train_encoder(&train, &config.encoder_config()).map_err(stage("train-encoder"))?;
    write_encoder(&root.join("encoder").join("params.bin"), &encoder).map_err(stage("train-encoder"))?;
    write_json(&root.join("encoder").join("log.json"), &log).map_err(stage("train-encoder"))?;

    let pw = config.pairwise_config();
    let w = config.encoder.window_w;
    let index = index_corpus(&encoder, &train, w, &root.join("train")).map_err(stage("embed"))?;
    let train_records = candidate_records(&train, &index, pw.train_k).map_err(stage("gen-pairs"))?;
    write_pairs_at(&root.join("train").join("pairs.jsonl"), &train_records).map_err(stage("gen-pairs"))?;
    let mut test_records = BTreeMap::new();
    for (id, corpus) in &tests {
        let dir = root.join("test").join(id);
        let index = index_corpus(&encoder, corpus, w, &dir).map_err(stage("embed"))?;
        let records = candidate_records(corpus, &index, pw.infer_k).map_err(stage("gen-pairs"))?;
        write_pairs_at(&dir.join("candidates.jsonl"), &records).map_err(stage("gen-pairs"))?;
        test_records.insert(id.clone(), records);
    }
    let shared = Shared {
        encoder: &encoder,
        train: &train,
        tests: &tests,
        train_records: &train_records,
        test_records: &test_records,
    };
    let none = BTreeSet::new();
    let cell = |pw: &PairwiseConfig, kind, name, tags: &BTreeSet<TokenTag>| {
        run_cell(&shared, pw, kind, name, tags, &root).map_err(stage("ablate"))
    };
    let baseline = cell(&pw, AblationKind::Baseline, "baseline".into(), &none)?;
    let mut windows = Vec::new();
    for &window_w in &ablation.window_sweep {
        let pw = PairwiseConfig { window_w, ..pw.clone() };
        windows.push(cell(&pw, AblationKind::Window, format!("window_w{window_w}"), &none)?);
    }
    let mut masks = Vec::new();
    for tags in &ablation.mask_tag_sets {
        masks.push(cell(&pw, AblationKind::Mask, format!("mask_{}", mask_name(tags)), tags)?);
    }
    let report = AblationReport {
        baseline,
        windows,
        masks,
    };
    write_json(&root.join("report.json"), &report).map_err(stage("ablate"))?;
    Ok(report)
}
