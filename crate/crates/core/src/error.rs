use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside its valid domain ({expected})")]
    Domain {
        quantity: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("singular network: {count} node(s) have no path to a fixed potential (first: {first})")]
    Singular { count: usize, first: String },

    #[error("shorted sources: {0}")]
    ShortedSources(String),

    #[error("readout terminals {a} and {b} are shorted together; the current split is undefined")]
    AmbiguousReadout { a: String, b: String },

    #[error("leakage fraction is undefined for an all-zero ideal readout")]
    ZeroIdealReadout,

    #[error("weight {value} at ({row}, {col}) exceeds the representable magnitude {limit}")]
    WeightRange {
        row: usize,
        col: usize,
        value: f64,
        limit: f64,
    },

    #[error("exponential block input a/v_t = {ratio} exceeds the overflow guard of {limit}")]
    Overflow { ratio: f64, limit: f64 },

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("unknown label {label:?} in {group}; nearest labels: {}", nearest.join(", "))]
    UnknownLabel {
        label: String,
        group: String,
        nearest: Vec<String>,
    },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    #[error("cost table has no entry for {block}")]
    MissingCost { block: String },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error in {source_name}, line {line}: {detail}")]
    Parse {
        source_name: String,
        line: usize,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(quantity: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain {
            quantity,
            value,
            expected,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// by a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Parse { .. }
                | Error::ConfigMismatch(_)
                | Error::MissingCost { .. }
                | Error::UnknownLabel { .. }
                | Error::Domain { .. }
        )
    }
}
