//! Process exit codes and the error type that carries them.

use ibn_node::api::ClientError;
use ibn_node::config::ConfigError;
use ibn_node::daemon::DaemonError;
use ibn_node::keys::KeyError;

pub const OK: i32 = 0;
pub const FAILURE: i32 = 1;
pub const CONFIG: i32 = 2;
pub const BIND: i32 = 3;
pub const UNAUTHORIZED: i32 = 4;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        Self::new(FAILURE, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(CONFIG, message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<KeyError> for CliError {
    fn from(e: KeyError) -> Self {
        let code = match e {
            KeyError::Missing(_) | KeyError::Corrupt { .. } => CONFIG,
            _ => FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<DaemonError> for CliError {
    fn from(e: DaemonError) -> Self {
        let code = match e {
            DaemonError::Config(_) | DaemonError::MissingKeyMaterial(_) | DaemonError::Keys(_) => CONFIG,
            DaemonError::Bind { .. } => BIND,
            DaemonError::Unauthorized(_) | DaemonError::CaMismatch | DaemonError::EnrollmentRejected(_) => UNAUTHORIZED,
            DaemonError::Io { .. } | DaemonError::Other(_) => FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let code = match e.status() {
            Some(401 | 403) => UNAUTHORIZED,
            _ => FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ibn_bench::BenchError> for CliError {
    fn from(e: ibn_bench::BenchError) -> Self {
        let code = match e {
            ibn_bench::BenchError::InvalidConfig(_) => CONFIG,
            _ => FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::failure(e.to_string())
    }
}
