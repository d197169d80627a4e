use std::fmt;

use serde_json::json;

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or malformed input files (exit 2).
    Usage { path: String, message: String },
    /// Valid input the engine cannot handle (exit 1).
    Domain(jumpexp_core::Error),
    /// Output could not be written (exit 1).
    Output(String),
}

impl CliError {
    pub fn usage(path: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Usage {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Domain(_) | CliError::Output(_) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage { path, message } => json!({"error": "usage", "path": path, "message": message}),
            CliError::Domain(e) => json!({"error": e.kind(), "message": e.to_string()}),
            CliError::Output(m) => json!({"error": "output", "message": m}),
        }
    }
}

impl From<jumpexp_core::Error> for CliError {
    fn from(e: jumpexp_core::Error) -> Self {
        CliError::Domain(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
