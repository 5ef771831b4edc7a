use thiserror::Error;

use crate::sldp::TailEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate environment: all {n} weights are zero")]
    DegenerateEnvironment { n: usize },

    #[error("quadrature did not reach relative tolerance {tol:e} within {nodes} nodes (error estimate {estimate:e})")]
    QuadratureFailure { tol: f64, nodes: usize, estimate: f64 },

    #[error("threshold interval is empty: ({lo}, {hi})")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("threshold a = {a} outside the admissible range ({lo}, {hi})")]
    OutOfRange { a: f64, lo: f64, hi: f64 },

    #[error("saddle solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("prefactor is degenerate: theta = {theta}, sigma2 = {sigma2}")]
    PrefactorDegenerate { theta: f64, sigma2: f64 },

    #[error("only {hits} indicator hits recorded; estimate is unreliable")]
    InsufficientHits {
        hits: u64,
        estimate: Box<TailEstimate>,
    },

    #[error("enumeration needs {tuples} tuples, cap is {cap}")]
    TooLarge { tuples: f64, cap: u64 },

    #[error("{got} replicas supplied, at least {required} required")]
    InsufficientReplicas { got: usize, required: usize },

    #[error("runs do not share a common key: {0}")]
    MismatchedRuns(String),
}

impl Error {
    /// Short machine-readable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "InvalidModel",
            Error::InvalidInput(_) => "InvalidInput",
            Error::DegenerateEnvironment { .. } => "DegenerateEnvironment",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::EmptyInterval { .. } => "EmptyInterval",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::PrefactorDegenerate { .. } => "PrefactorDegenerate",
            Error::InsufficientHits { .. } => "InsufficientHits",
            Error::TooLarge { .. } => "TooLarge",
            Error::InsufficientReplicas { .. } => "InsufficientReplicas",
            Error::MismatchedRuns(_) => "MismatchedRuns",
        }
    }
}
