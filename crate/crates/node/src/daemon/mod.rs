//! Networked drivers for the sans-IO cores: UDP for the tunnel, HTTP for the
//! registry and control interfaces, append-only files for persistence.

mod ibnsc;
mod peer;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use ibnsc::{start_ibnsc, IbnscHandle};
pub use peer::{enroll, rotate_and_enroll, start_peer, PeerHandle, SUBMIT_TIMEOUT};

use crate::config::ConfigError;
use crate::keys::KeyError;

pub const REGISTRY_LOG: &str = "registry.log";
pub const RECORDS_LOG: &str = "records.log";
pub const AUDIT_LOG: &str = "audit.log";
pub const OUTBOX_LOG: &str = "outbox.log";

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing key material: {0}")]
    MissingKeyMaterial(KeyError),
    #[error(transparent)]
    Keys(KeyError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("certificate does not verify under the local CA key")]
    CaMismatch,
    #[error("enrollment rejected: {0}")]
    EnrollmentRejected(String),
    #[error("this peer is not authorized (certificate {0}); re-enroll to continue")]
    Unauthorized(String),
    #[error("{0}")]
    Other(String),
}

impl From<KeyError> for DaemonError {
    fn from(e: KeyError) -> Self {
        match e {
            KeyError::Missing(_) => Self::MissingKeyMaterial(e),
            other => Self::Keys(other),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DaemonError + '_ {
    move |source| DaemonError::Io { path: path.to_path_buf(), source }
}

/// Reads every line of an append-only log, parsing each with `parse`.
/// A missing file reads as empty; a torn final line is ignored.
fn read_log<T, E: std::fmt::Display>(path: &Path, parse: impl Fn(&str) -> Result<T, E>) -> Result<Vec<T>, DaemonError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(io_err(path))?;
    let last = lines.len().saturating_sub(1);
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse(line) {
            Ok(v) => out.push(v),
            Err(e) if i == last => tracing::warn!(path = %path.display(), %e, "ignoring torn final log line"),
            Err(e) => {
                return Err(DaemonError::Other(format!("{}: line {}: {e}", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}

struct LogFile {
    path: PathBuf,
    file: File,
}

impl LogFile {
    fn open(path: PathBuf) -> Result<Self, DaemonError> {
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        Ok(Self { path, file })
    }

    fn append(&mut self, lines: impl IntoIterator<Item = String>) {
        let mut buf = String::new();
        for l in lines {
            buf.push_str(&l);
            buf.push('\n');
        }
        if buf.is_empty() {
            return;
        }
        if let Err(e) = self.file.write_all(buf.as_bytes()).and_then(|_| self.file.sync_data()) {
            tracing::error!(path = %self.path.display(), %e, "log append failed");
        }
    }
}

fn random_seed() -> [u8; 32] {
    use rand::RngCore;
    let mut b = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut b);
    b
}

async fn bind_udp(addr: SocketAddr) -> Result<tokio::net::UdpSocket, DaemonError> {
    tokio::net::UdpSocket::bind(addr).await.map_err(|source| DaemonError::Bind { addr, source })
}

async fn bind_tcp(addr: SocketAddr) -> Result<tokio::net::TcpListener, DaemonError> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| DaemonError::Bind { addr, source })
}

/// Maps an error to a JSON body with the given status code.
fn http_error(status: axum::http::StatusCode, msg: impl std::fmt::Display) -> axum::response::Response {
    use axum::response::IntoResponse;
    (status, axum::Json(crate::api::ErrorBody { error: msg.to_string() })).into_response()
}
