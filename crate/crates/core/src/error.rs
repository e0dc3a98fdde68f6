use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("matrix of size {dim} is not positive definite after the full jitter ladder")]
    NotPositiveDefinite { dim: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("non-finite loss at iteration {iteration} (parameter norm {param_norm:.3e})")]
    NonFiniteLoss { iteration: usize, param_norm: f64 },

    #[error("operation requires a mean-field posterior")]
    UnsupportedPosterior,

    #[error("unsupported architecture: {0}")]
    ArchitectureUnsupported(String),

    #[error("region assumption violated: {0}")]
    RegionAssumptionViolated(String),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("missing value at row {row}, column {column}")]
    MissingValue { row: usize, column: usize },

    #[error("dataset hash mismatch for {name}: manifest {expected}, file {got}")]
    HashMismatch { name: String, expected: String, got: String },

    #[error("dataset not found: {0}")]
    DatasetNotFound(PathBuf),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
