use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("document {doc_id} (line {line}): mention {mention_id}: span out of bounds: {detail}")]
    SpanOutOfBounds {
        line: usize,
        doc_id: String,
        mention_id: String,
        detail: String,
    },

    #[error("duplicate document id {doc_id} (line {line})")]
    DuplicateDocument { line: usize, doc_id: String },

    #[error("duplicate mention id {mention_id} (document {doc_id})")]
    DuplicateMention { doc_id: String, mention_id: String },

    #[error("unknown mention {0}")]
    UnknownMention(String),

    #[error("unknown cluster {0}")]
    UnknownCluster(String),

    #[error("mention {0} has no gold cluster label")]
    MissingGold(String),

    #[error("no embedding for mention {0}")]
    MissingEmbedding(String),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("masking requested but the corpus carries no token tags")]
    NoTags,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("mention {0} is not covered by the neighbor index")]
    CoverageGap(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("score {score} for pair ({a}, {b}) is outside [0, 1]")]
    ScoreOutOfRange { a: String, b: String, score: f64 },

    #[error("duplicate pair ({0}, {1})")]
    DuplicatePair(String, String),

    #[error("unscored pair ({0}, {1})")]
    UnscoredPair(String, String),

    #[error("mention sets of gold and predicted partitions differ ({0})")]
    MentionSetMismatch(String),

    #[error("malformed binary file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_path(self, path: impl Into<PathBuf>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
