use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV input: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("row {row}: empty label")]
    EmptyLabel { row: usize },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },

    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),

    #[error("no numeric feature columns remain after dropping categorical columns")]
    NoFeatures,

    #[error("class {class} has {count} sample(s); stratified split needs at least 2")]
    ClassTooSmall { class: usize, count: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training set must contain both labels -1 and +1")]
    SingleClass,

    #[error("curve fit failed: {0}")]
    FitFailed(String),

    #[error("alpha {0} outside the open interval (0, 1)")]
    AlphaOutOfRange(f64),

    #[error("analog classifier supports at most {max} inputs, model has {found}")]
    AnalogCapacityExceeded { max: usize, found: usize },

    #[error("model kernel is {found}, operation requires {expected}")]
    WrongKernel { expected: &'static str, found: &'static str },

    #[error("model has no support vectors with nonzero dual coefficient")]
    DegenerateAlphas,

    #[error("encoder for {0} classes is too large to tabulate (max 7)")]
    TooManyClasses(usize),

    #[error("feature mask of dataset does not match the one the system was built with")]
    FeatureMaskMismatch,

    #[error("cost coefficients missing entry for {0}")]
    MissingCoefficient(String),

    #[error("calibration infeasible: {0}")]
    InfeasibleCalibration(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
