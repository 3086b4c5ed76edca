//! Batch front end: configuration, the `run`, `convergence` and `compare`
//! commands, acceptance checks and report writers.

pub mod check;
pub mod commands;
pub mod config;
pub mod output;
pub mod runs;

pub use config::{ConfigError, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(#[from] oldroyd_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} acceptance check(s) failed")]
    Check(usize),
}

impl CliError {
    /// 2 configuration, 3 solver failure, 4 missed threshold, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Check(_) => 4,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}
