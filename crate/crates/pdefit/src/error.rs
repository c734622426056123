//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PdefitError {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    InvalidDimension(usize),

    #[error("cell count per dimension must be positive")]
    EmptyGrid,

    #[error("domain edge length must be positive, got {0}")]
    InvalidEdgeLength(f64),

    #[error("polynomial order must be at least 1")]
    InvalidOrder,

    #[error("box edge {edge} must be positive and smaller than the domain edge {domain}")]
    InvalidBoxEdge { edge: f64, domain: f64 },

    #[error("sample count must be at least 1")]
    EmptyCloud,

    #[error("lattice volume ratio Q must be at least 1, got {0}")]
    InvalidVolumeRatio(f64),

    #[error("coefficient lower bound must be positive, got {0}")]
    InvalidCoefficientBound(f64),

    #[error("regularization weight delta must be positive, got {0}")]
    InvalidDelta(f64),

    #[error("length mismatch: expected {expected}, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("solver did not converge within {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("{0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PdefitError>;
