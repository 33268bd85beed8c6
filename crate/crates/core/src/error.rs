use std::path::PathBuf;

use crate::scoring::Capability;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: malformed JSON: {source}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("empty corpus: {0}")]
    EmptyCorpus(PathBuf),

    #[error("{id}: embedding has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),

    #[error("unknown task id `{0}`")]
    UnknownTask(String),

    #[error("unknown video id `{0}`")]
    UnknownVideo(String),

    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u64, expected: u64 },

    #[error("embedding space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("empty edited schema: every step was deleted at beta = {beta}")]
    EmptyEditedSchema { beta: f64 },

    #[error("empty candidate set for task `{0}` (step and clip embeddings may live in different spaces)")]
    EmptyCandidates(String),

    #[error("provider lacks capability `{0}`")]
    MissingCapability(Capability),

    #[error("provider error: {0}")]
    Provider(String),

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that originate in a scoring provider (model backend,
    /// sidecar transport) rather than in the input data.
    pub fn is_provider(&self) -> bool {
        matches!(self, Error::Provider(_) | Error::MissingCapability(_))
    }
}
