//! Crate-wide error type.

use thiserror::Error;

use crate::histogram::Cell;

/// Errors produced by estimator construction and evaluation.
#[derive(Debug, Error)]
pub enum CscmError {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An observation lies outside the grid support (beyond the 1e-12
    /// clamping tolerance).
    #[error("observation {index} at (t={t}, z={z}) lies outside the support [0, {m1}] x [0, {m2}]")]
    OutOfSupport {
        index: usize,
        t: f64,
        z: f64,
        m1: f64,
        m2: f64,
    },

    /// The histogram has cells without observations; the smoothed-likelihood
    /// maximizer is then not guaranteed to be unique, so fitting is refused
    /// unless the caller opts into proceeding. Coarsening the grid removes
    /// the empty cells.
    #[error("histogram has {} empty cell(s) ({cells:?}); the maximizer may not be unique — coarsen the grid or fit with EmptyCellPolicy::Proceed", cells.len())]
    EmptyCells { cells: Vec<Cell> },

    /// Two arguments were built on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A grid-CDF evaluation needed a node where the estimator is undefined
    /// (no observations in the two-cell window around that node).
    #[error("plug-in estimator is undefined at grid node (i={i}, j={j}): no observations in the surrounding time window")]
    UndefinedNode { i: usize, j: usize },

    /// The kernel plug-in denominator vanished: no observation within one
    /// bandwidth of the evaluation time.
    #[error("kernel plug-in undefined at t0={t0}: no observation within bandwidth {bandwidth}")]
    ZeroDenominator { t0: f64, bandwidth: f64 },

    /// A density handed to a distance computation took a negative value.
    #[error("negative density value {value} at ({t}, {z})")]
    NegativeDensity { value: f64, t: f64, z: f64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CscmError>;

impl CscmError {
    /// Stable machine-readable tag for the CLI's JSON error channel.
    pub fn kind(&self) -> &'static str {
        match self {
            CscmError::InvalidArgument(_) => "invalid_argument",
            CscmError::OutOfSupport { .. } => "out_of_support",
            CscmError::EmptyCells { .. } => "empty_cells",
            CscmError::GridMismatch(_) => "grid_mismatch",
            CscmError::UndefinedNode { .. } => "undefined_node",
            CscmError::ZeroDenominator { .. } => "zero_denominator",
            CscmError::NegativeDensity { .. } => "negative_density",
            CscmError::Csv(_) => "csv",
            CscmError::Io(_) => "io",
            CscmError::Json(_) => "json",
        }
    }
}
