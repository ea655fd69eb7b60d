use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed manifest record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("duplicate utterance_id `{0}`")]
    DuplicateId(String),
    #[error("inconsistent feature_dim: record `{id}` has {found}, manifest uses {expected}")]
    InconsistentDim {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("{path}: bad magic, expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: unsupported format version {version}")]
    BadVersion { path: PathBuf, version: u32 },
    #[error("{path}: header says {header_frames}x{header_dim}, record says {record_frames}x{record_dim}")]
    HeaderMismatch {
        path: PathBuf,
        header_frames: usize,
        header_dim: usize,
        record_frames: usize,
        record_dim: usize,
    },
    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },
    #[error("non-finite value {context}")]
    NonFinite { context: String },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient classes: requested {requested}, manifest has {available}")]
    InsufficientClasses { requested: usize, available: usize },
    #[error("split `{split}` has no records for class `{class}` after speaker filtering")]
    EmptySplitClass { split: String, class: String },
    #[error("infeasible episode: {0}")]
    InfeasibleEpisode(String),
    #[error("ill-conditioned system (reciprocal condition {rcond:.3e})")]
    Conditioning { rcond: f64 },
    #[error("solver produced a non-finite value at iteration {iteration}")]
    SolverDiverged { iteration: usize },
    #[error("non-finite loss in episode {episode} ({learner})")]
    NonFiniteLoss { episode: usize, learner: String },
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("unseen label `{0}`")]
    UnseenLabel(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from the numerics rather than from the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning { .. }
                | Error::SolverDiverged { .. }
                | Error::NonFiniteLoss { .. }
                | Error::NonFinite { .. }
        )
    }
}
