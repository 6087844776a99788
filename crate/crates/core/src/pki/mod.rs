//! Controller-side certificate authority and the registry of active peer
//! static keys. The registry is the access-control gate the tunnel consults
//! on every handshake.

mod cert;
mod records;
mod registry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cert::{
    ca_init, issue_certificate, verify_certificate, CaPublicKey, Certificate,
    CertificateAuthority, Validity, CERTIFICATE_LEN,
};
pub use records::{
    enrollment_token, EnrollmentRequest, RecordEnvelope, RevocationRequest, ENROLLMENT_LEN,
    REVOCATION_LEN,
};
pub use registry::{PeerRegistry, RegistryLogEntry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PkiError {
    #[error("validity window is empty")]
    InvalidValidity,
    #[error("signature does not verify under the CA key")]
    BadSignature,
    #[error("certificate expired")]
    Expired,
    #[error("certificate not yet valid")]
    NotYetValid,
    #[error("certificate serial {0} is revoked")]
    Revoked(u64),
    #[error("no active certificate for role {0}")]
    UnknownRole(StakeholderRole),
    #[error("serial {0} was never issued")]
    UnknownSerial(u64),
    #[error("role {0} cannot be registered as a peer")]
    NotAPeerRole(StakeholderRole),
    #[error("malformed record: {0}")]
    Malformed(&'static str),
    #[error("enrollment request failed authentication")]
    BadEnrollmentTag,
    #[error("request timestamp is stale")]
    StaleRequest,
}

/// Intent stakeholders. Exactly one controller exists per deployment; the
/// other four roles are its peers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StakeholderRole {
    Ibnsc,
    Csc,
    Csp,
    Nop,
    Visp,
}

impl StakeholderRole {
    pub const ALL: [StakeholderRole; 5] = [Self::Ibnsc, Self::Csc, Self::Csp, Self::Nop, Self::Visp];
    pub const PEERS: [StakeholderRole; 4] = [Self::Csc, Self::Csp, Self::Nop, Self::Visp];

    pub fn code(self) -> u8 {
        match self {
            Self::Ibnsc => 0,
            Self::Csc => 1,
            Self::Csp => 2,
            Self::Nop => 3,
            Self::Visp => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_peer(self) -> bool {
        self != Self::Ibnsc
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ibnsc => "ibnsc",
            Self::Csc => "csc",
            Self::Csp => "csp",
            Self::Nop => "nop",
            Self::Visp => "visp",
        }
    }
}

impl fmt::Display for StakeholderRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

impl FromStr for StakeholderRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown stakeholder role `{s}`"))
    }
}
