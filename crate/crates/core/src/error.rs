use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("query has {0} points, at least 2 are required")]
    QueryTooShort(usize),
    #[error("query has {got} points but the dataset expects q = {expected}")]
    QueryLength { expected: usize, got: usize },
    #[error("point {point} coordinate {coord} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        point: usize,
        coord: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("point {point} is not an element of the finite domain")]
    NotInFiniteSet { point: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("choice {choice} out of range for a query of {q} points")]
    ChoiceOutOfRange { choice: usize, q: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("newton iterations did not converge (gradient inf-norm {grad_norm:.3e} after {iterations} iterations)")]
    NewtonNonConvergence { grad_norm: f64, iterations: usize },
    #[error("cholesky factorization failed even with jitter {jitter:.1e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("observation has zero probability under every hypothesis")]
    ImpossibleObservation,
    #[error("all hyperparameter restarts failed: {0}")]
    HyperparameterFit(String),
    #[error("noise calibration failed: {0}")]
    Calibration(String),
    #[error("unknown name: {0}")]
    UnknownName(String),
    #[error("trace lengths differ: {0} vs {1}")]
    TraceLength(usize, usize),
}

pub type Result<T> = std::result::Result<T, Error>;
