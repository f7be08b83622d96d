//! Error classes mapped to exit codes.

use std::fmt;

use stockflow::ensemble::EnsembleError;
use stockflow::io::CsvError;
use stockflow::scenario::{RunError, ScenarioError};

#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: config, CSV schema, usage. Exit 1.
    Validation(String),
    /// Simulation failures (non-convergence). Exit 2.
    Runtime(String),
    /// Filesystem problems. Exit 3.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Read { .. } => CliError::Io(e.to_string()),
            ScenarioError::Parse { .. } | ScenarioError::Invalid(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Inversion(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Io { .. } => CliError::Io(e.to_string()),
            CsvError::Malformed { .. } | CsvError::Schema { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}
