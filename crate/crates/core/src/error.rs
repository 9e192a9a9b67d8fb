use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside grid range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("measures live on different return grids")]
    IncompatibleGrid,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("signed measure must have zero total mass, got {total:e}")]
    NonZeroTotal { total: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dense operator of size {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("linear solve failed: residual {residual:e} exceeds {bound:e}")]
    NumericFailure { residual: f64, bound: f64 },

    #[error("estimated density {density:e} at the quantile is below the floor {floor:e}")]
    DegenerateDensity { density: f64, floor: f64 },

    #[error("rollout and dynamic programming disagree: {0}")]
    Discrepancy(Box<crate::oracle::CrossCheckReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
