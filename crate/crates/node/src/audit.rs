//! Security-relevant rejections, one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::Path;

use ibn_core::pki::StakeholderRole;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    /// Datagram or frame that does not parse.
    Malformed,
    /// Initiation whose encrypted fields do not open under our static key.
    HandshakeAuthFailure,
    /// Initiator static key has no active certificate.
    Unauthorized,
    /// Initiation timestamp not newer than the last accepted one.
    StaleHandshake,
    /// Data for a session index we do not hold.
    UnknownSession,
    TransportAuthFailure,
    Replay,
    SessionExpired,
    OwnerSpoof,
    UnauthorizedReporter,
    UnknownIntent,
    IllegalTransition,
    /// A parked intent was evicted because the park was full.
    ParkDropped,
    /// Sessions torn down after a certificate was revoked or replaced.
    Revoked,
    EnrollmentRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub at: u64,
    pub kind: AuditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SocketAddr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<StakeholderRole>,
    pub detail: String,
}

impl AuditEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("audit events serialize")
    }
}

/// Appends events to a file.
pub struct AuditLog {
    file: File,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self { file: OpenOptions::new().create(true).append(true).open(path)? })
    }

    pub fn append(&mut self, events: &[AuditEvent]) -> std::io::Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&e.to_line());
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.flush()
    }
}

/// The last `n` events in the file, oldest first. Unparseable lines are skipped.
pub fn tail(path: &Path, n: usize) -> std::io::Result<Vec<AuditEvent>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut ring = std::collections::VecDeque::with_capacity(n.min(4096));
    for line in BufReader::new(file).lines() {
        if let Ok(ev) = serde_json::from_str::<AuditEvent>(&line?) {
            if ring.len() == n {
                ring.pop_front();
            }
            if n > 0 {
                ring.push_back(ev);
            }
        }
    }
    Ok(ring.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut log = AuditLog::open(&path).unwrap();
        let events: Vec<_> = (0..5)
            .map(|i| AuditEvent {
                at: i,
                kind: AuditKind::Unauthorized,
                source: Some("127.0.0.1:9".parse().unwrap()),
                role: None,
                detail: format!("attempt {i}"),
            })
            .collect();
        log.append(&events).unwrap();
        let last = tail(&path, 2).unwrap();
        assert_eq!(last, events[3..].to_vec());
        assert!(tail(&dir.path().join("none"), 3).unwrap().is_empty());
    }
}
