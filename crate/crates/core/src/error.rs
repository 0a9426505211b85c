use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 4 cells, got {0}")]
    TooFewCells(usize),

    #[error("time grid needs a positive horizon and at least 2 steps (T = {horizon}, steps = {steps})")]
    InvalidTimeGrid { horizon: f64, steps: usize },

    #[error("ellipticity violated: sampled a = {min} at x = {x}")]
    Ellipticity { min: f64, x: f64 },

    #[error("quadrature resolves only {points_per_period:.2} points per period (need at least 16)")]
    UnderResolved { points_per_period: f64 },

    #[error("invalid coefficient recipe: {0}")]
    InvalidRecipe(String),

    #[error("recipe is not periodic")]
    NotPeriodic,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },

    #[error("invalid control window [{lo}, {hi}]: {reason}")]
    InvalidWindow { lo: f64, hi: f64, reason: String },

    #[error("conjugate gradients stopped after {iterations} iterations with relative residual {residual:e}")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("dense Riccati solve limited to {limit} unknowns, got {n}")]
    RiccatiTooLarge { n: usize, limit: usize },

    #[error("Riccati iterate lost symmetry ({asymmetry:e}) at step {step}")]
    SymmetryLoss { step: usize, asymmetry: f64 },

    #[error("stationary Riccati solve failed: {0}")]
    AreNotConverged(String),

    #[error("decay fit: {0}")]
    Fit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
