use thiserror::Error;

use crate::solver::SolverOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid support: {0}")]
    InvalidSupport(String),

    #[error("invalid sparsity budget: {0}")]
    InvalidBudget(String),

    #[error("enumeration cap exceeded: dimension {dimension} is above the cap of {cap} indices (set WCS_ENUM_CAP to raise it)")]
    CapExceeded { dimension: usize, cap: usize },

    #[error("index {index} alone has sparse measure {measure} which exceeds the budget {budget}")]
    IndexExceedsBudget {
        index: usize,
        measure: f64,
        budget: f64,
    },

    #[error("infeasible system: measurement residual {residual:.3e} exceeds the allowed {allowed:.3e}")]
    Infeasible { residual: f64, allowed: f64 },

    #[error("solver did not converge after {} iterations (fixed-point residual {:.3e})", .outcome.iterations, .outcome.fixed_point_residual)]
    NotConverged { outcome: Box<SolverOutcome> },

    #[error("premise violated: {0}")]
    Premise(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("no admissible witness: {0}")]
    NoWitness(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
