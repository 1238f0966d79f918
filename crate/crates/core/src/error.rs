use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("typing violation: ({head}, {relation}, {tail}): {msg}")]
    Typing { head: String, relation: String, tail: String, msg: String },

    #[error("target selection: requested {requested} targets but only {available} are eligible")]
    InsufficientTargets { requested: usize, available: usize },

    #[error("template bank has no entry for relation `{0}`")]
    MissingTemplate(String),

    #[error("dataset record {index}: {msg}")]
    Dataset { index: usize, msg: String },

    #[error("tokenizer: word `{0}` is not in the vocabulary")]
    UnknownWord(String),

    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("neighbor mining: {0}")]
    Neighbors(String),

    #[error("probe {probe_id}: scorer failed: {msg}")]
    Scorer { probe_id: String, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
