use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("triplet ({row}, {col}, {value}) out of range for a {n_rows}x{n_cols} matrix")]
    TripletOutOfRange {
        row: usize,
        col: usize,
        value: f64,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("window [{start}, {end}) exceeds matrix dimension {n}")]
    WindowOutOfRange { start: usize, end: usize, n: usize },

    #[error("matrix must be square, got {n_rows}x{n_cols}")]
    NotSquare { n_rows: usize, n_cols: usize },

    #[error("block size {k} out of range [1, {n}]")]
    BlockSizeOutOfRange { k: usize, n: usize },

    #[error("covariance matrix is not symmetric: |S[{row}][{col}] - S[{col}][{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver did not converge at time step {step}: relative residual {rel_residual:e}")]
    StepNotConverged { step: usize, rel_residual: f64 },

    #[error("policy file version error: {0}")]
    PolicyVersion(String),

    #[error("policy shape error: {0}")]
    PolicyShape(String),

    #[error("policy parse error at line {line}: {message}")]
    PolicyParse { line: usize, message: String },

    #[error("non-finite loss during PPO update (episode {episode:?}): {diagnostics}")]
    NonFiniteLoss {
        episode: Option<usize>,
        diagnostics: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
