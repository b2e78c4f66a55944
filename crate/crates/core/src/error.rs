use thiserror::Error;

/// Errors produced by the collocation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid quadrature order {0}: expected 1..=64")]
    InvalidOrder(usize),

    #[error("projected size {projected} exceeds the cap of {cap}")]
    ResourceLimit { projected: u128, cap: u128 },

    #[error("closed-form node count is only available for levels 1..=5 with level <= dimension (got L={level}, d={dim})")]
    UnsupportedLevel { level: usize, dim: usize },

    #[error("integrand returned a non-finite value at node {node}")]
    NonFiniteIntegrand { node: usize },

    #[error("scheme diverged at step {step}: state became non-finite")]
    Divergence { step: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error("singular parameters: {0}")]
    SingularParameter(String),

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    FixedPointDivergence { iterations: usize, residual: f64 },

    #[error("singular one-step system for noise value y={y}, h={h}")]
    Solver { y: f64, h: f64 },

    #[error("basis truncation {lstar} aliases on a grid of {points} points (need lstar <= points/2)")]
    Aliasing { lstar: usize, points: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
