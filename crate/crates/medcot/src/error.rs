//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record ({detail})")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("record {id}: {detail}")]
    InvalidRecord { id: String, detail: String },

    #[error("label permutation domain mismatch: permutation over {perm} labels, record has {record}")]
    PermutationDomain { perm: usize, record: usize },

    #[error("requested {requested} shots but only {available} train records carry explanations")]
    InsufficientShots { requested: usize, available: usize },

    #[error("prompt spec invalid: {0}")]
    PromptSpec(String),

    #[error("cache miss for key {key} (replay provider never falls back to live)")]
    CacheMiss { key: String },

    #[error("provider {provider} request failed with status {status}: {body_excerpt}")]
    ProviderStatus {
        provider: String,
        status: u16,
        body_excerpt: String,
    },

    #[error("provider {provider} retry budget exhausted after {attempts} attempts: {last_error}")]
    RetriesExhausted {
        provider: String,
        attempts: usize,
        last_error: String,
    },

    #[error("provider {provider}: {detail}")]
    Provider { provider: String, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown report kind {kind:?}; valid kinds: {valid}")]
    UnknownReportKind { kind: String, valid: String },

    #[error("question sets differ between runs; symmetric difference: {0}")]
    MismatchedQuestions(String),

    #[error("run aborted with partial results (resume with the same config): {0}")]
    PartialRun(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
