use std::path::PathBuf;

use crate::dag::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed DAG: {0}")]
    MalformedDag(String),

    #[error("invalid DAG:\n{0}")]
    InvalidDag(ValidationReport),

    #[error("vertex `{0}` is not in the frontier of the current prefix")]
    NotInFrontier(String),

    #[error("vertex `{vertex}`: {reason}")]
    BadBinding { vertex: String, reason: String },

    #[error("design space exceeds the enumeration cap of {cap} schedules")]
    EnumerationTooLarge { cap: usize },

    #[error("schedule is inconsistent with its DAG: {0}")]
    InvalidSchedule(String),

    #[error("unknown cost key `{0}`")]
    UnknownCostKey(String),

    #[error("invalid cost model: {0}")]
    InvalidCostModel(String),

    #[error("`{wait}` has no matching posted communication")]
    NoMatchingPost { wait: String },

    #[error("executor failed for schedule `{key}`: {source}")]
    Executor {
        key: String,
        #[source]
        source: Box<Error>,
    },

    #[error("external command exited with {status}: {stderr}")]
    CommandFailed { status: String, stderr: String },

    #[error("cannot parse seconds from command output {output:?}")]
    UnparsableOutput { output: String },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("array of length {len} is too short for radius {radius}")]
    TooShortForRadius { len: usize, radius: usize },

    #[error("cannot train on an empty feature matrix")]
    EmptyMatrix,

    #[error("feature vector has width {got}, tree expects {expected}")]
    FeatureWidth { expected: usize, got: usize },

    #[error("gini impurity of an all-zero mass vector is undefined")]
    ZeroMass,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("dataset mismatch: {0}")]
    DagMismatch(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
