//! Cross-document coreference resolution over gold mentions.
//!
//! The pipeline has two stages. A bi-encoder embeds every mention so that
//! coreferent mentions sit near their gold-cluster centroid; exact
//! inner-product KNN over those embeddings yields a sparse candidate graph.
//! A pairwise scorer then classifies the retrieved pairs, and a greedy
//! agglomerative pass merges clusters that share a retrieved edge and whose
//! average cross-pair probability exceeds one half.
//!
//! ```text
//! corpus -> encoder -> retrieval -> pairwise -> clustering -> metrics
//! ```
//!
//! [`pipeline`] wires the stages together and persists every artifact.

pub mod clustering;
pub mod corpus;
pub mod encoder;
pub mod error;
mod hashing;
pub mod metrics;
pub mod pairwise;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;

pub use clustering::{greedy_cluster, MergeStep, MergeTrace};
pub use corpus::{Corpus, Document, Mention, MentionType, Partition, Sentence, TokenTag};
pub use encoder::{EncoderConfig, EncoderParams, FeatureVector, MentionEmbedding};
pub use error::{Error, Result};
pub use metrics::{MetricReport, Prf};
pub use pairwise::{CandidateScorer, OracleScorer, PairwiseConfig, ScoreTable, ScoredPair, ScorerParams};
pub use pipeline::{PipelineConfig, PipelineReport};
pub use retrieval::{CandidatePair, NeighborIndex};
