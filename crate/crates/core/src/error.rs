use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown {field} value `{value}`")]
    UnknownValue {
        line: usize,
        field: &'static str,
        value: String,
    },

    #[error("line {line}: expected 6 or 7 columns in token line, found {found}")]
    ColumnCount { line: usize, found: usize },

    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),

    #[error("no label for instance `{id}` ({missing} unlabeled in total)")]
    MissingLabel { id: String, missing: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{0}")]
    SingleClass(String),

    #[error("ROC undefined: {positives} positives and {negatives} negatives")]
    RocUndefined { positives: usize, negatives: usize },

    #[error("non-finite score for prediction {0}")]
    NonFiniteScore(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no head for track {0}")]
    UnknownTrack(String),

    #[error("need at least two valid groups, found {found}")]
    TooFewGroups { found: usize },

    #[error("vocabulary mismatch: expected {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("country mapping line {line}: {message}")]
    Mapping { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
