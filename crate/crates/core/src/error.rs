//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors raised by dataset construction, simulation, fitting and prediction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid variogram model: {0}")]
    InvalidModel(String),

    #[error(
        "circulant embedding is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e}) \
         and the grid has {nodes} nodes, above the Cholesky limit of {cholesky_limit}"
    )]
    SimulationFailed {
        min_eigenvalue: f64,
        nodes: usize,
        cholesky_limit: usize,
    },

    #[error("covariance matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("requested {requested} nodes but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("too few neighbours: found {found}, need at least {required}")]
    TooFewNeighbors { found: usize, required: usize },

    #[error("kriging system is singular after merging duplicate locations ({n} unknowns)")]
    SingularSystem { n: usize },

    #[error("no usable pairs for the {mode} cross-variogram ({details})")]
    NoUsablePairs { mode: &'static str, details: String },

    #[error("incompatible variogram binning: {0}")]
    IncompatibleBins(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, GeoError>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> GeoError {
    GeoError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
