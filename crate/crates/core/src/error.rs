use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("{file}:{line}: event references unknown {entity} {id}")]
    UnknownReference {
        file: String,
        line: usize,
        entity: &'static str,
        id: u32,
    },

    #[error("dataset spans a single week; a temporal split needs at least two")]
    SingleWeek,

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("no user has a ground-truth item; cannot build a training file")]
    NoEligibleUsers,

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("training matrix is empty or unlabeled")]
    EmptyTrainingMatrix,

    #[error("non-finite feature value in column {column}")]
    NonFiniteFeature { column: String },

    #[error("invalid prediction for user {user}: {reason}")]
    InvalidPrediction { user: u32, reason: String },

    #[error("item {item} is not on the candidate list of user {user}")]
    MissingCandidate { user: u32, item: u32 },

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
