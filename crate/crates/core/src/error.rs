use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NormNotConverged { iterations: usize, estimate: f64 },

    #[error("projection did not converge after {sweeps} sweeps (residual {residual:e})")]
    ProjectionNotConverged { sweeps: usize, residual: f64 },

    #[error("polyhedral set appears to be empty (projection residual stalled at {residual:e})")]
    InfeasibleSet { residual: f64 },

    #[error("inner solve did not reach tolerance {tol:e} within {iterations} iterations (residual {residual:e})")]
    InnerSolveFailed {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("constrained subproblem looks infeasible (feasibility residual stalled at {residual:e})")]
    SubproblemInfeasible { residual: f64 },

    #[error("oracle does not support {0}")]
    UnsupportedOracle(&'static str),

    #[error("non-finite iterate at step {step}")]
    NonFinite { step: usize },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
