use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing value at row {row}, column {col}")]
    MissingData { row: usize, col: String },

    #[error("invalid price {value} at row {row}, column {col}")]
    InvalidPrice { row: usize, col: String, value: f64 },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("parse error at row {row}: {message}")]
    ParseError { row: usize, message: String },

    #[error("insufficient data: need {needed} rows, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("no test data: {rows} rows cannot hold train {train_len} + validation {val_len} + 1")]
    NoTestData {
        rows: usize,
        train_len: usize,
        val_len: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid perplexity {perplexity} for {n} points (need 1 < perplexity <= n - 1)")]
    InvalidPerplexity { perplexity: f64, n: usize },

    #[error("t-SNE diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("invalid kernel scale {0}")]
    InvalidScale(f64),

    #[error("vertex {0} has zero degree in the affinity graph")]
    IsolatedVertex(usize),

    #[error("invalid cluster count k = {k} for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("grouping covers {grouping} assets but panel has {panel}")]
    GroupingMismatch { grouping: usize, panel: usize },

    #[error("degenerate tangency portfolio: 1'S^-1 mu = {0:e}")]
    DegenerateTangency(f64),

    #[error("covariance matrix is singular even after ridge regularization")]
    SingularCovariance,

    #[error("weight basis does not match panel columns")]
    BasisMismatch,

    #[error("return series has zero variance")]
    ZeroVariance,

    #[error("bootstrap produced too many zero-variance resamples ({draws} draws for {reps} reps)")]
    BootstrapDegenerate { draws: usize, reps: usize },

    #[error("no candidate produced a finite validation score")]
    NoViableCandidate,

    #[error("no industry metadata for ticker {0}")]
    MetadataMissing(String),

    #[error("group sizes sum to {sum} but panel has {n} assets")]
    SizeMismatch { sum: usize, n: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
