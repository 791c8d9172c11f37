use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KgError>;

/// Every failure the toolkit reports.
///
/// The CLI maps these onto exit codes: numeric failures exit with 3, every
/// other variant is treated as a data error (exit 2).
#[derive(Debug, Error)]
pub enum KgError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{count} triple(s) appear in more than one split, e.g. {examples:?}")]
    DuplicateAcrossSplits { count: usize, examples: Vec<String> },

    #[error("{count} evaluation triple(s) use symbols unseen in train, e.g. {examples:?}")]
    NotTransductive { count: usize, examples: Vec<String> },

    #[error("mediator {0} is connected to another mediator; chained mediators are unsupported")]
    ChainedMediator(String),

    #[error("unknown {kind} `{name}`")]
    UnknownSymbol { kind: &'static str, name: String },

    #[error("symbol `{name}` has no embedding in the model ({kind} id {id} >= {available})")]
    MissingEmbedding {
        kind: &'static str,
        name: String,
        id: usize,
        available: usize,
    },

    #[error("vocabulary hash mismatch for {kind}: checkpoint {expected}, data {found}")]
    VocabMismatch {
        kind: &'static str,
        expected: String,
        found: String,
    },

    #[error("non-finite parameter detected at training step {step}")]
    NumericFailure { step: usize },

    #[error("pair scoring for relation `{relation}` needs {needed} scores, over the budget of {budget}; supply candidate entity sets")]
    PairBudget {
        relation: String,
        needed: u128,
        budget: u128,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KgError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, KgError::NumericFailure { .. })
    }
}
