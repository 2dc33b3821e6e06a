use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pgm parse error at byte {offset}: {reason}")]
    PgmParse { offset: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("expected a {expected_width}x{expected_height} image, got {width}x{height}")]
    WrongImageSize {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("resize target dimensions must be nonzero")]
    ZeroResizeTarget,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("input contains a non-finite value")]
    NonFinite,

    #[error("training data contains a single class; at least two are required")]
    SingleClass,

    #[error("invalid label {0}: binary labels must be +1 or -1")]
    InvalidLabel(f64),

    #[error("invalid hyperparameter: {0}")]
    InvalidParameter(String),

    #[error("requested {requested} components but only {available} non-degenerate eigenpairs exist")]
    InsufficientRank { requested: usize, available: usize },

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("fold {fold} failed: {source}")]
    Fold { fold: usize, source: Box<Error> },

    #[error("class {label} has {size} samples, too few for a {fraction} holdout split")]
    UnstratifiableClass {
        label: String,
        size: usize,
        fraction: f64,
    },

    #[error("invalid report: {0}")]
    InvalidReport(String),

    #[error("unsupported model version {found}, expected {expected}")]
    ModelVersion { found: u32, expected: u32 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model file is not valid: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an IO error with the path it concerned.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
