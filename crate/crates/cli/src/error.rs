use std::fmt;
use std::process::ExitCode;

/// Failure of a command, split by who has to act on it.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, arguments or inputs: exit code 1.
    User(String),
    /// Everything else: exit code 2.
    Internal(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::User(_) => ExitCode::from(1),
            CliError::Internal(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<mareg_core::Error> for CliError {
    fn from(e: mareg_core::Error) -> Self {
        use mareg_core::Error as E;
        use std::io::ErrorKind;
        match &e {
            E::NonFinite { .. } => CliError::Internal(e.to_string()),
            E::Io { source, .. } if !matches!(source.kind(), ErrorKind::NotFound | ErrorKind::PermissionDenied) => {
                CliError::Internal(e.to_string())
            }
            _ => CliError::User(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    let msg = format!("{}: {e}", path.display());
    match e.kind() {
        std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied => CliError::User(msg),
        _ => CliError::Internal(msg),
    }
}
