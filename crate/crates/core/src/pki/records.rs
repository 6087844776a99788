//! Signed or MAC'd request records carried by the registry's HTTP interface.
//! All records are fixed-layout binary, hex-encoded inside a JSON envelope.

use serde::{Deserialize, Serialize};

use super::cert::{CaPublicKey, CertificateAuthority};
use super::{PkiError, StakeholderRole};
use crate::crypto::{hmac, PublicKey};

const REC_ENROLLMENT: u8 = 0x02;
const REC_REVOCATION: u8 = 0x03;
const ENROLL_BODY: usize = 1 + 1 + 32 + 8;
pub const ENROLLMENT_LEN: usize = ENROLL_BODY + 32;
const REVOKE_BODY: usize = 1 + 8 + 8;
pub const REVOCATION_LEN: usize = REVOKE_BODY + 64;

/// `{"record": "<hex>"}`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEnvelope {
    pub record: String,
}

impl RecordEnvelope {
    pub fn new(bytes: &[u8]) -> Self {
        Self { record: hex::encode(bytes) }
    }

    pub fn bytes(&self) -> Result<Vec<u8>, PkiError> {
        hex::decode(self.record.trim()).map_err(|_| PkiError::Malformed("envelope hex"))
    }
}

/// Per-role enrollment secret derived from the deployment's master token.
/// Operators hand each stakeholder only its own derived token.
pub fn enrollment_token(master: &[u8; 32], role: StakeholderRole) -> [u8; 32] {
    hmac(master, &[b"ibn enrollment token", &[role.code()]])
}

/// Bootstrap request for a certificate, authenticated with the role's
/// enrollment token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrollmentRequest {
    pub role: StakeholderRole,
    pub static_pub: PublicKey,
    pub timestamp: u64,
    pub tag: [u8; 32],
}

impl EnrollmentRequest {
    fn body(role: StakeholderRole, static_pub: &PublicKey, timestamp: u64) -> [u8; ENROLL_BODY] {
        let mut b = [0u8; ENROLL_BODY];
        b[0] = REC_ENROLLMENT;
        b[1] = role.code();
        b[2..34].copy_from_slice(static_pub.as_bytes());
        b[34..42].copy_from_slice(&timestamp.to_le_bytes());
        b
    }

    pub fn new(role: StakeholderRole, static_pub: PublicKey, timestamp: u64, token: &[u8; 32]) -> Self {
        let tag = hmac(token, &[&Self::body(role, &static_pub, timestamp)]);
        Self { role, static_pub, timestamp, tag }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Self::body(self.role, &self.static_pub, self.timestamp).to_vec();
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PkiError> {
        if bytes.len() != ENROLLMENT_LEN || bytes[0] != REC_ENROLLMENT {
            return Err(PkiError::Malformed("enrollment request"));
        }
        Ok(Self {
            role: StakeholderRole::from_code(bytes[1]).ok_or(PkiError::Malformed("enrollment role"))?,
            static_pub: PublicKey(bytes[2..34].try_into().unwrap()),
            timestamp: u64::from_le_bytes(bytes[34..42].try_into().unwrap()),
            tag: bytes[42..].try_into().unwrap(),
        })
    }

    /// Checks the tag under the token derived for the claimed role.
    pub fn verify(&self, master: &[u8; 32]) -> Result<(), PkiError> {
        let token = enrollment_token(master, self.role);
        let expect = hmac(&token, &[&Self::body(self.role, &self.static_pub, self.timestamp)]);
        let diff = expect.iter().zip(&self.tag).fold(0u8, |acc, (a, b)| acc | (a ^ b));
        if diff == 0 {
            Ok(())
        } else {
            Err(PkiError::BadEnrollmentTag)
        }
    }
}

/// Revocation order signed by the CA key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RevocationRequest {
    pub serial: u64,
    pub timestamp: u64,
    pub signature: [u8; 64],
}

impl RevocationRequest {
    fn body(serial: u64, timestamp: u64) -> [u8; REVOKE_BODY] {
        let mut b = [0u8; REVOKE_BODY];
        b[0] = REC_REVOCATION;
        b[1..9].copy_from_slice(&serial.to_le_bytes());
        b[9..17].copy_from_slice(&timestamp.to_le_bytes());
        b
    }

    pub fn sign(ca: &CertificateAuthority, serial: u64, timestamp: u64) -> Self {
        Self { serial, timestamp, signature: ca.sign(&Self::body(serial, timestamp)) }
    }

    pub fn verify(&self, ca_pub: &CaPublicKey) -> Result<(), PkiError> {
        ca_pub.verify(&Self::body(self.serial, self.timestamp), &self.signature)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Self::body(self.serial, self.timestamp).to_vec();
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PkiError> {
        if bytes.len() != REVOCATION_LEN || bytes[0] != REC_REVOCATION {
            return Err(PkiError::Malformed("revocation request"));
        }
        Ok(Self {
            serial: u64::from_le_bytes(bytes[1..9].try_into().unwrap()),
            timestamp: u64::from_le_bytes(bytes[9..17].try_into().unwrap()),
            signature: bytes[17..].try_into().unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pki::ca_init;

    #[test]
    fn enrollment_tag_binds_role() {
        let master = [9u8; 32];
        let token = enrollment_token(&master, StakeholderRole::Csp);
        let req = EnrollmentRequest::new(StakeholderRole::Csp, PublicKey([1; 32]), 77, &token);
        let back = EnrollmentRequest::decode(&req.encode()).unwrap();
        assert_eq!(back, req);
        assert!(back.verify(&master).is_ok());

        // A CSP token cannot enroll a NOP key.
        let forged = EnrollmentRequest::new(StakeholderRole::Nop, PublicKey([1; 32]), 77, &token);
        assert_eq!(forged.verify(&master), Err(PkiError::BadEnrollmentTag));
    }

    #[test]
    fn revocation_signature() {
        let ca = ca_init([3; 32]);
        let req = RevocationRequest::sign(&ca, 12, 1000);
        let back = RevocationRequest::decode(&req.encode()).unwrap();
        assert!(back.verify(&ca.public_key()).is_ok());
        assert!(back.verify(&ca_init([4; 32]).public_key()).is_err());
        let mut bad = back.clone();
        bad.serial = 13;
        assert!(bad.verify(&ca.public_key()).is_err());
    }

    #[test]
    fn envelope_hex() {
        let env = RecordEnvelope::new(&[0xab, 0x01]);
        assert_eq!(env.record, "ab01");
        assert_eq!(env.bytes().unwrap(), vec![0xab, 0x01]);
        assert!(RecordEnvelope { record: "zz".into() }.bytes().is_err());
    }
}
