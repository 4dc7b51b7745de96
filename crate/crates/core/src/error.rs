use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector length {got} does not match system size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("field is not coercive: smallest sampled eigenvalue {0:e}")]
    NonCoercive(f64),

    #[error("declared coercivity {declared} exceeds sampled minimum {sampled}")]
    DeclaredCoercivity { declared: f64, sampled: f64 },

    #[error("source node {0} lies on the Dirichlet boundary")]
    SourcePlacement(usize),

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("dense oracle limited to {cap} unknowns, got {got}")]
    TooLarge { cap: usize, got: usize },

    #[error("matrix is numerically singular at pivot {0}")]
    Singular(usize),

    #[error("shell at radius {radius} holds {count} nodes (need at least {min})")]
    SparseShell { radius: f64, count: usize, min: usize },

    #[error("non-positive value {value:e} at radius {radius} inside the fit window")]
    NonPositive { radius: f64, value: f64 },

    #[error("fit window [{r_min}, {r_max}] holds {count} radii (need at least {min})")]
    WindowTooSmall { r_min: f64, r_max: f64, count: usize, min: usize },

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("harmonicity precondition violated: residual {residual:e} exceeds {tolerance:e}")]
    NotHarmonic { residual: f64, tolerance: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
