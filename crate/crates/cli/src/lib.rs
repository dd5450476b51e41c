//! Command-line front end for running `parkmpc` scenarios.

pub mod commands;
pub mod plot;
pub mod scenario_file;
pub mod trace;

use thiserror::Error;

pub use commands::{run, run_one, validate, RunConfig, RunSummary};
pub use scenario_file::{Override, ScenarioFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    /// Invariant violations found by `validate`, one per entry.
    #[error("{} invariant(s) violated: {}", .0.len(), .0.join("; "))]
    Invalid(Vec<String>),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}
