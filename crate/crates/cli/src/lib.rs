//! Experiment driver for the salm solvers: configuration, single runs,
//! sweeps, audits and their on-disk outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod run;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("audit violation: {0}")]
    Audit(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Audit(_) => 3,
        }
    }
}

impl From<salm::Error> for CliError {
    fn from(e: salm::Error) -> Self {
        use salm::Error::*;
        match e {
            NormNotConverged { .. }
            | ProjectionNotConverged { .. }
            | InnerSolveFailed { .. }
            | SubproblemInfeasible { .. }
            | NonFinite { .. } => CliError::Numerical(e.to_string()),
            DimensionMismatch { .. } | InvalidArgument(_) | InfeasibleSet { .. } | UnsupportedOracle(_) | Config(_) => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
