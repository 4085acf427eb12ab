use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("unknown query id {0:?}")]
    UnknownQuery(String),

    #[error("unknown doc id {0:?}")]
    UnknownDoc(String),

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("qrel ({query}, {doc}) assigned to more than one split")]
    ConflictingSplit { query: String, doc: String },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("truncated payload while reading {what}")]
    Truncated { what: String },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("uncovered record {0:?}")]
    UncoveredRecord(String),

    #[error("position {position} out of range for record {record:?} of length {len}")]
    PositionOutOfRange {
        record: String,
        position: usize,
        len: usize,
    },

    #[error("unknown image id {0:?}")]
    UnknownImage(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("query {0:?} has no images")]
    NoQueryImages(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("no training triples")]
    NoTriples,

    #[error("non-finite loss on triple ({query}, {positive}, {negative})")]
    NonFiniteLoss {
        query: String,
        positive: String,
        negative: String,
    },

    #[error("unsupported checkpoint version {0}")]
    CheckpointVersion(u32),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
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
