use std::fmt;
use std::path::Path;

use serde_json::json;

/// Failures sorted by who has to act on them; each maps to an exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files (exit 2).
    Input { code: String, message: String },
    /// The data do not support the requested estimate (exit 3).
    Degenerate { code: String, message: String },
    /// Anything else, including failures writing output (exit 4).
    Internal(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input {
            code: "invalid-input".into(),
            message: message.into(),
        }
    }

    pub fn read(path: &Path, e: std::io::Error) -> Self {
        CliError::Input {
            code: "io".into(),
            message: format!("cannot read {}: {e}", path.display()),
        }
    }

    pub fn write(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Degenerate { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        let (code, message) = match self {
            CliError::Input { code, message } | CliError::Degenerate { code, message } => {
                (code.as_str(), message.as_str())
            }
            CliError::Internal(m) => ("internal", m.as_str()),
        };
        json!({ "error": { "code": code, "message": message, "exit": self.exit_code() } })
            .to_string()
    }
}

impl From<crc_core::Error> for CliError {
    fn from(e: crc_core::Error) -> Self {
        use crc_core::Error as E;
        let code = e.code().to_string();
        let message = e.to_string();
        if e.is_degeneracy() {
            return CliError::Degenerate { code, message };
        }
        match e {
            E::MalformedRecord { .. }
            | E::Inconsistent(_)
            | E::InvalidInput { .. }
            | E::Json(_)
            | E::Csv(_) => CliError::Input { code, message },
            _ => CliError::Internal(message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input { message, .. } | CliError::Degenerate { message, .. } => {
                f.write_str(message)
            }
            CliError::Internal(m) => f.write_str(m),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
