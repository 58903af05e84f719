use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cdcr_core::corpus::{Corpus, Partition};
use cdcr_core::metrics::{evaluate, MetricReport};
use cdcr_core::pipeline::{self, PipelineConfig, PipelineReport};
use cdcr_core::synthetic::{self, SyntheticConfig};

/// Cross-document coreference resolution: retrieval, pairwise scoring,
/// greedy clustering and evaluation.
#[derive(Parser)]
#[command(name = "cdcr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the bi-encoder on the train splits.
    TrainEncoder(Common),
    /// Embed the train and test splits with the trained bi-encoder.
    Embed(Common),
    /// Check the embedding files and write the index manifest.
    BuildIndex(Common),
    /// Retrieve KNN candidate pairs (train_k for train, infer_k for test).
    GenPairs(Common),
    /// Train the pairwise scorer on the labelled train pairs.
    TrainPairwise(Common),
    /// Score the test candidate pairs.
    ScorePairs(Common),
    /// Cluster each test corpus from its scored pairs.
    Cluster(Common),
    /// Evaluate predicted partitions against gold.
    Score {
        #[command(flatten)]
        common: Common,
        /// Gold partition JSON, or a corpus JSONL carrying gold labels.
        #[arg(long, requires = "pred", value_name = "PATH")]
        gold: Option<PathBuf>,
        /// Predicted partition JSON.
        #[arg(long, requires = "gold", value_name = "PATH")]
        pred: Option<PathBuf>,
    },
    /// Run every stage end to end.
    Pipeline(Common),
    /// Cluster retrieved pairs with gold-label scores (upper bound).
    OracleStudy {
        #[command(flatten)]
        common: Common,
        /// Retrieval depth; defaults to pairwise.infer_k. 0 retrieves nothing.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Window and masking ablations of the pairwise stage.
    Ablate(Common),
    /// Write a synthetic train/dev/test bundle and a config for it.
    Synth {
        /// Directory to write into.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Sample seed of the train split; dev and test use the next two.
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        /// Seed of the cluster inventory.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let Some(path) = &self.config else {
            bail!("--config is required");
        };
        let mut config = PipelineConfig::read(path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_reports(report: &PipelineReport) {
    for (id, r) in &report.corpora {
        println!("== {id}\n{r}");
    }
    if let Some(h) = &report.harmonic_mean {
        println!(
            "== harmonic mean\nB3 F1 {:.2}  CoNLL F1 {:.2}",
            100.0 * h.b_cubed_f1,
            100.0 * h.conll_f1
        );
    }
}

fn read_gold(path: &Path) -> Result<Partition> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(Corpus::read(path, None)?.gold_partition()?)
    } else {
        Ok(Partition::read(path)?)
    }
}

/// Runs one stage of the pipeline from the artifacts already on disk.
fn stage(name: &'static str, common: &Common, run: impl FnOnce(&PipelineConfig) -> Result<()>) -> Result<()> {
    let config = common.load().with_context(|| format!("[{name}] loading config"))?;
    run(&config).map_err(|e| anyhow::anyhow!("[{name}] {e:#}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainEncoder(c) => stage("train-encoder", &c, |config| {
            let (_, log) = pipeline::train_encoder_stage(config, &config.load_train()?)?;
            for (epoch, loss) in log.epoch_loss.iter().enumerate() {
                println!("epoch {epoch:>3}  loss {loss:.6}");
            }
            Ok(())
        }),
        Command::Embed(c) => stage("embed", &c, |config| {
            Ok(pipeline::embed_stage(config, &config.load_train()?, &config.load_tests()?)?)
        }),
        Command::BuildIndex(c) => stage("build-index", &c, |config| {
            let manifest = pipeline::build_index_manifest(config, &config.load_tests()?)?;
            for (split, entry) in &manifest.splits {
                println!("{split}: {} mentions, dim {}", entry.mentions, entry.dim);
            }
            Ok(())
        }),
        Command::GenPairs(c) => stage("gen-pairs", &c, |config| {
            Ok(pipeline::gen_pairs_stage(config, &config.load_train()?, &config.load_tests()?)?)
        }),
        Command::TrainPairwise(c) => stage("train-pairwise", &c, |config| {
            let (_, log) = pipeline::train_pairwise_stage(config, &config.load_train()?)?;
            println!(
                "{} positive / {} negative pairs; bce {:.6} -> {:.6}",
                log.positives,
                log.negatives,
                log.initial_bce,
                log.epoch_bce.last().copied().unwrap_or(log.initial_bce)
            );
            Ok(())
        }),
        Command::ScorePairs(c) => stage("score-pairs", &c, |config| {
            Ok(pipeline::score_pairs_stage(config, &config.load_tests()?)?)
        }),
        Command::Cluster(c) => stage("cluster", &c, |config| {
            for (id, partition) in pipeline::cluster_stage(config, &config.load_tests()?)? {
                println!("{id}: {} mentions in {} clusters", partition.len(), partition.clusters().len());
            }
            Ok(())
        }),
        Command::Score {
            gold: Some(gold),
            pred: Some(pred),
            ..
        } => {
            let report: MetricReport = (|| -> Result<MetricReport> {
                Ok(evaluate(&read_gold(&gold)?, &Partition::read(&pred)?)?)
            })()
            .map_err(|e| anyhow::anyhow!("[score] {e:#}"))?;
            println!("{report}");
            Ok(())
        }
        Command::Score { common, .. } => stage("score", &common, |config| {
            print_reports(&pipeline::evaluate_stage(config, &config.load_tests()?)?);
            Ok(())
        }),
        Command::Pipeline(c) => {
            let config = c.load().context("[config]")?;
            print_reports(&pipeline::run_pipeline(&config)?);
            Ok(())
        }
        Command::OracleStudy { common, k } => {
            let config = common.load().context("[config]")?;
            let report = pipeline::run_oracle_study_at(&config, k.unwrap_or(config.pairwise.infer_k))?;
            for (id, r) in &report.corpora {
                println!(
                    "== {id} (k = {})\npair recall {:.2} ({} pairs, {} coreferent of {} gold links)\n{}",
                    report.k,
                    100.0 * r.pair_recall.recall,
                    r.pair_recall.pairs,
                    r.pair_recall.coreferent_pairs,
                    r.pair_recall.gold_links,
                    r.metrics
                );
            }
            Ok(())
        }
        Command::Ablate(c) => {
            let config = c.load().context("[config]")?;
            println!("{}", pipeline::run_ablations(&config)?);
            Ok(())
        }
        Command::Synth { out, sample_seed, seed } => {
            let base = SyntheticConfig {
                seed,
                sample_seed,
                ..SyntheticConfig::default()
            };
            synthetic::write_bundle(&out, &base).map_err(|e| anyhow::anyhow!("[synth] {e}"))?;
            println!("wrote {}", out.join("config.json").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
