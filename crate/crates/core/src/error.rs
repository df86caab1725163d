use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid corpus: {}", format_violations(.0))]
    InvalidCorpus(Vec<Violation>),

    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error(
        "insufficient class population: class {class} has {available} samples, {required} required"
    )]
    InsufficientClassPopulation {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("degenerate prior: 1 - prior[{class}] <= 1e-12")]
    DegeneratePrior { class: usize },

    #[error("noise rate too large: {0} >= 0.5")]
    NoiseRateTooLarge(f64),

    #[error("N exceeds n: cannot form {groups} groups from {samples} samples")]
    TooManyGroups { groups: usize, samples: usize },

    #[error("length mismatch: expected {expected} entries, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-integer line {line}: {content:?}")]
    NonIntegerLine { line: usize, content: String },

    #[error("negative id on line {line}: {value}")]
    NegativeId { line: usize, value: i64 },

    #[error("non-numeric line {line}: {content:?}")]
    NonNumericLine { line: usize, content: String },

    #[error("missing group assignment")]
    MissingGroupAssignment,

    #[error("missing clean labels")]
    MissingCleanLabels,

    #[error("unknown group {group} (group count {group_count})")]
    UnknownGroup { group: usize, group_count: usize },

    #[error("group {0} covers entire corpus")]
    GroupCoversCorpus(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("tail population has vanishing mass: Phi(-eta) < 1e-300 (eta = {0})")]
    VanishingTail(f64),

    #[error("empty population: {0}")]
    EmptyPopulation(&'static str),

    #[error("empty noisy class: {0}")]
    EmptyNoisyClass(&'static str),

    #[error("risk-equivalence objectives require a balanced prior, got P(Y=+1) = {0}")]
    UnbalancedPrior(f64),

    #[error("zero variance: all paired differences equal {0}, statistic is infinite")]
    ZeroVariance(f64),

    #[error("fixture malformed: {0}")]
    FixtureMalformed(String),

    #[error("model file malformed: {0}")]
    ModelMalformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

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

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
    if v.len() > 5 {
        format!("{} (and {} more)", shown.join("; "), v.len() - 5)
    } else {
        shown.join("; ")
    }
}
