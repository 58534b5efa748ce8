//! Batch front-end: experiment configs, optimisation runs, observables,
//! circuit schedules and quantum-double checks.

pub mod commands;
pub mod config;
pub mod output;

use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 1.
    Config(String),
    /// A verification failed; exit code 2.
    Verification(String),
    /// Numerical or I/O failure during a run; exit code 1.
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Verification(_) => ExitCode::from(2),
            _ => ExitCode::from(1),
        }
    }
}

impl From<isogftns::Error> for CliError {
    fn from(e: isogftns::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}
