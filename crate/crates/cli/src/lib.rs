//! Library side of the `aks-flow` command: configuration, the verification
//! battery, and trajectory output.

pub mod battery;
pub mod commands;
pub mod config;
pub mod output;

/// Why a command did not succeed, mapped to the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("checks failed: {}", .0.join(", "))]
    Checks(Vec<String>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Checks(_) => 1,
            Failure::Config(_) | Failure::Solver(_) => 2,
        }
    }
}
