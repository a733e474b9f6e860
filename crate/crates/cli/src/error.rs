//! CLI error type with machine-readable codes and process exit codes.

use soda_core::SodaError;

/// Exit code for configuration problems (missing file, invalid values).
pub const EXIT_CONFIG: i32 = 3;
/// Exit code for usage errors (clap's convention).
pub const EXIT_USAGE: i32 = 2;
/// Exit code for runtime failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config_not_found(path: &std::path::Path) -> Self {
        Self {
            code: "CONFIG_NOT_FOUND",
            message: format!("config file not found: {}", path.display()),
            exit_code: EXIT_CONFIG,
        }
    }

    pub fn config_invalid(message: impl Into<String>) -> Self {
        Self {
            code: "CONFIG_INVALID",
            message: message.into(),
            exit_code: EXIT_CONFIG,
        }
    }

    pub fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            exit_code: EXIT_FAILURE,
        }
    }

    /// The machine-readable JSON emitted on stderr before a nonzero exit.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "code": self.code, "message": self.message }
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<SodaError> for CliError {
    fn from(e: SodaError) -> Self {
        let (code, exit_code) = match &e {
            SodaError::InvalidConfig(_) => ("CONFIG_INVALID", EXIT_CONFIG),
            SodaError::Migration(_) => ("MIGRATION_ERROR", EXIT_FAILURE),
            SodaError::Budget(_) => ("BUDGET_ERROR", EXIT_FAILURE),
            SodaError::Numerical(_) => ("NUMERICAL_ERROR", EXIT_FAILURE),
            SodaError::StaleBase { .. } => ("STALE_BASE", EXIT_FAILURE),
            SodaError::Io(_) => ("IO_ERROR", EXIT_FAILURE),
            _ => ("RUNTIME_ERROR", EXIT_FAILURE),
        };
        Self {
            code,
            message: e.to_string(),
            exit_code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: "IO_ERROR",
            message: e.to_string(),
            exit_code: EXIT_FAILURE,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: "SERIALIZATION_ERROR",
            message: e.to_string(),
            exit_code: EXIT_FAILURE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self {
            code: "CSV_ERROR",
            message: e.to_string(),
            exit_code: EXIT_FAILURE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
