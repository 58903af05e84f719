//! One function per pipeline stage. Each reads the previous stage's
//! artifacts from the output layout and writes its own.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{greedy_cluster, MergeTrace};
use crate::corpus::{Corpus, Partition};
use crate::encoder::{
    embed_corpus, read_embeddings_file, train_encoder, write_embeddings_file, EncoderParams, MentionEmbedding,
    TrainingLog,
};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::pairwise::{
    load_external_scores, mention_vectors, train_pairwise, CandidateScorer, PairwiseConfig, PairwiseLog,
    ScorerParams, TrainedScorer,
};
use crate::retrieval::{
    generate_pairs, label_pairs, pairs_from_records, read_pairs_file, write_pairs_file, NeighborIndex, PairRecord,
};

use super::{read_json, write_file, write_json, PipelineConfig, PipelineReport};

pub fn train_encoder_stage(config: &PipelineConfig, train: &Corpus) -> Result<(EncoderParams, TrainingLog)> {
    let layout = config.layout();
    let (params, log) = train_encoder(train, &config.encoder_config())?;
    if let (Some(first), Some(last)) = (log.epoch_loss.first(), log.epoch_loss.last()) {
        log::info!(
            "encoder: {} epochs, mean loss {first:.4} -> {last:.4}",
            log.epoch_loss.len()
        );
    }
    write_encoder(&layout.encoder_params(), &params)?;
    write_json(&layout.encoder_log(), &log)?;
    Ok((params, log))
}

pub(crate) fn write_encoder(path: &Path, params: &EncoderParams) -> Result<()> {
    let mut buf = Vec::new();
    params.write(&mut buf)?;
    write_file(path, &buf)
}

pub(crate) fn read_encoder(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
    EncoderParams::read(bytes.as_slice()).map_err(|e| e.at_path(path))
}

/// Writes embeddings as CEMB and returns what a reader of that file sees,
/// so downstream stages never depend on precision the file does not keep.
pub(crate) fn persist_embeddings(path: &Path, embeddings: &[MentionEmbedding]) -> Result<Vec<MentionEmbedding>> {
    let dim = embeddings.first().map_or(0, |e| e.vector.len());
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    }
    write_embeddings_file(path, dim, embeddings)?;
    Ok(read_embeddings_file(path)?.1)
}

pub fn embed_stage(config: &PipelineConfig, train: &Corpus, tests: &BTreeMap<String, Corpus>) -> Result<()> {
    let layout = config.layout();
    let params = read_encoder(&layout.encoder_params())?;
    let w = config.encoder.window_w;
    persist_embeddings(&layout.train_embeddings(), &embed_corpus(&params, train, w)?)?;
    for (id, corpus) in tests {
        persist_embeddings(&layout.test_embeddings(id), &embed_corpus(&params, corpus, w)?)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub embeddings: String,
    pub mentions: usize,
    pub dim: usize,
}

/// What `build-index` checked: one entry per embedding file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub splits: BTreeMap<String, IndexEntry>,
}

fn load_index(path: &Path, corpus: &Corpus) -> Result<NeighborIndex> {
    let (_, embeddings) = read_embeddings_file(path)?;
    let index = NeighborIndex::build(&embeddings).map_err(|e| e.at_path(path))?;
    if let Some(m) = corpus.mentions().find(|m| !index.contains(&m.mention_id)) {
        return Err(Error::CoverageGap(m.mention_id.clone()).at_path(path));
    }
    Ok(index)
}

/// Builds every index once to check the embedding files cover their
/// corpora, and records the result. The index itself is cheap to rebuild,
/// so only the manifest is stored.
pub fn build_index_manifest(config: &PipelineConfig, tests: &BTreeMap<String, Corpus>) -> Result<IndexManifest> {
    let layout = config.layout();
    let mut manifest = IndexManifest::default();
    let mut record = |name: String, path: &Path, index: &NeighborIndex| {
        let rel = path.strip_prefix(layout.root()).unwrap_or(path);
        manifest.splits.insert(
            name,
            IndexEntry {
                embeddings: rel.to_string_lossy().replace('\\', "/"),
                mentions: index.len(),
                dim: index.dim(),
            },
        );
    };
    let train_path = layout.train_embeddings();
    if train_path.is_file() {
        let (_, embeddings) = read_embeddings_file(&train_path)?;
        let index = NeighborIndex::build(&embeddings).map_err(|e| e.at_path(&train_path))?;
        record("train".into(), &train_path, &index);
    }
    for (id, corpus) in tests {
        let path = layout.test_embeddings(id);
        let index = load_index(&path, corpus)?;
        record(format!("test/{id}"), &path, &index);
    }
    write_json(&layout.index_manifest(), &manifest)?;
    Ok(manifest)
}

/// KNN candidate pairs of `corpus`, labelled by gold when the corpus has it.
pub(crate) fn candidate_records(corpus: &Corpus, index: &NeighborIndex, k: usize) -> Result<Vec<PairRecord>> {
    let pairs = generate_pairs(corpus, index, k)?;
    let gold = corpus.gold_partition().ok();
    Ok(label_pairs(&pairs, gold.as_ref()))
}

pub fn gen_pairs_stage(config: &PipelineConfig, train: &Corpus, tests: &BTreeMap<String, Corpus>) -> Result<()> {
    let layout = config.layout();
    let pw = config.pairwise_config();
    let index = load_index(&layout.train_embeddings(), train)?;
    let records = candidate_records(train, &index, pw.train_k)?;
    log::info!("train: {} candidate pairs at k={}", records.len(), pw.train_k);
    write_pairs_at(&layout.train_pairs(), &records)?;
    for (id, corpus) in tests {
        let index = load_index(&layout.test_embeddings(id), corpus)?;
        let records = candidate_records(corpus, &index, pw.infer_k)?;
        log::info!("{id}: {} candidate pairs at k={}", records.len(), pw.infer_k);
        write_pairs_at(&layout.candidates(id), &records)?;
    }
    Ok(())
}

pub(crate) fn write_pairs_at(path: &Path, records: &[PairRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    }
    write_pairs_file(path, records)
}

/// Fits the scorer on labelled records.
pub(crate) fn fit_scorer(
    encoder: &EncoderParams,
    train: &Corpus,
    records: &[PairRecord],
    config: &PairwiseConfig,
) -> Result<(ScorerParams, PairwiseLog)> {
    let labelled = pairs_from_records(records)?
        .into_iter()
        .map(|(pair, r)| match r.label {
            Some(l) => Ok((pair, l == 1)),
            None => Err(Error::InvalidConfig(format!("training pair {pair} has no label"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let vectors = mention_vectors(encoder, train, config.window_w)?;
    train_pairwise(&labelled, &vectors, config)
}

pub fn train_pairwise_stage(config: &PipelineConfig, train: &Corpus) -> Result<(ScorerParams, PairwiseLog)> {
    let layout = config.layout();
    let encoder = read_encoder(&layout.encoder_params())?;
    let records = read_pairs_file(&layout.train_pairs())?;
    let (params, log) = fit_scorer(&encoder, train, &records, &config.pairwise_config())?;
    if let Some(last) = log.epoch_bce.last() {
        log::info!(
            "pairwise: {} positive / {} negative pairs, bce {:.4} -> {last:.4}",
            log.positives,
            log.negatives,
            log.initial_bce
        );
    }
    write_json(&layout.pairwise_params(), &params)?;
    write_json(&layout.pairwise_log(), &log)?;
    Ok((params, log))
}

fn trained_scorer(config: &PipelineConfig, corpus: &Corpus) -> Result<TrainedScorer> {
    let layout = config.layout();
    let encoder = read_encoder(&layout.encoder_params())?;
    let params: ScorerParams = read_json(&layout.pairwise_params())?;
    TrainedScorer::new(params, mention_vectors(&encoder, corpus, config.pairwise.window_w)?)
}

/// Copies of `records` carrying the scorer's probability.
pub(crate) fn score_records(scorer: &dyn CandidateScorer, records: &[PairRecord]) -> Result<Vec<PairRecord>> {
    let pairs = pairs_from_records(records)?;
    let mut out = Vec::with_capacity(records.len());
    for (pair, r) in pairs {
        out.push(PairRecord {
            score: Some(scorer.probability(&pair)?),
            ..r.clone()
        });
    }
    Ok(out)
}

pub fn score_pairs_stage(config: &PipelineConfig, tests: &BTreeMap<String, Corpus>) -> Result<()> {
    let layout = config.layout();
    for (id, corpus) in tests {
        let scorer = trained_scorer(config, corpus)?;
        let records = read_pairs_file(&layout.candidates(id))?;
        write_pairs_at(&layout.scored_pairs(id), &score_records(&scorer, &records)?)?;
    }
    Ok(())
}

/// Clusters all mentions of `corpus` from scored candidate records; `scorer`
/// answers for pairs the records do not cover.
pub(crate) fn cluster_records(
    corpus: &Corpus,
    records: &[PairRecord],
    scorer: &dyn CandidateScorer,
) -> Result<(Partition, MergeTrace)> {
    let table = load_external_scores(records)?;
    let scored: Vec<_> = table.iter().collect();
    let mentions: Vec<&str> = corpus.mentions().map(|m| m.mention_id.as_str()).collect();
    greedy_cluster(&mentions, &scored, scorer, true)
}

pub(crate) fn write_clustering(partition_path: &Path, trace_path: &Path, partition: &Partition, trace: &MergeTrace) -> Result<()> {
    write_file(partition_path, (partition.to_json() + "\n").as_bytes())?;
    let mut buf = Vec::new();
    trace.write_jsonl(&mut buf)?;
    write_file(trace_path, &buf)
}

pub fn cluster_stage(config: &PipelineConfig, tests: &BTreeMap<String, Corpus>) -> Result<BTreeMap<String, Partition>> {
    let layout = config.layout();
    let mut out = BTreeMap::new();
    for (id, corpus) in tests {
        let scorer = trained_scorer(config, corpus)?;
        let records = read_pairs_file(&layout.scored_pairs(id))?;
        let (partition, trace) = cluster_records(corpus, &records, &scorer)?;
        log::info!(
            "{id}: {} mentions in {} clusters",
            partition.len(),
            partition.clusters().len()
        );
        write_clustering(&layout.partition(id), &layout.trace(id), &partition, &trace)?;
        out.insert(id.clone(), partition);
    }
    Ok(out)
}

pub fn evaluate_stage(config: &PipelineConfig, tests: &BTreeMap<String, Corpus>) -> Result<PipelineReport> {
    let layout = config.layout();
    let mut reports = BTreeMap::new();
    for (id, corpus) in tests {
        let gold = corpus.gold_partition()?;
        let pred = Partition::read(&layout.partition(id))?;
        let report = evaluate(&gold, &pred).map_err(|e| e.at_path(layout.partition(id)))?;
        log::info!("{id}: B3 F1 {:.4}, CoNLL F1 {:.4}", report.b_cubed.f1, report.conll_f1);
        write_json(&layout.corpus_report(id), &report)?;
        reports.insert(id.clone(), report);
    }
    let report = PipelineReport::new(reports);
    write_json(&layout.report(), &report)?;
    Ok(report)
}
