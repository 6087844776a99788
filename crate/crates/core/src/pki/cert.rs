use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};

use super::{PkiError, StakeholderRole};
use crate::crypto::PublicKey;

pub(crate) const REC_CERTIFICATE: u8 = 0x01;
const CERT_VERSION: u8 = 1;
const SIGNED_LEN: usize = 1 + 1 + 1 + 32 + 8 + 8 + 8;
pub const CERTIFICATE_LEN: usize = SIGNED_LEN + 64;

/// Ed25519 verifying key of the controller's CA.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CaPublicKey(pub [u8; 32]);

impl CaPublicKey {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, PkiError> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.trim(), &mut out).map_err(|_| PkiError::Malformed("CA key hex"))?;
        Ok(Self(out))
    }

    /// Checks an Ed25519 signature made by the CA over `msg`.
    pub fn verify(&self, msg: &[u8], signature: &[u8; 64]) -> Result<(), PkiError> {
        let vk = VerifyingKey::from_bytes(&self.0).map_err(|_| PkiError::BadSignature)?;
        vk.verify_strict(msg, &Signature::from_bytes(signature))
            .map_err(|_| PkiError::BadSignature)
    }
}

impl fmt::Debug for CaPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CaPublicKey({})", &self.to_hex()[..16])
    }
}

/// Validity window in UTC seconds, `not_before` inclusive, `not_after` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: u64,
    pub not_after: u64,
}

impl Validity {
    pub fn starting_at(now: u64, lifetime_secs: u64) -> Self {
        Self { not_before: now, not_after: now.saturating_add(lifetime_secs) }
    }
}

/// Binding of a stakeholder role to its static X25519 key, signed by the CA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub subject_role: StakeholderRole,
    pub subject_static_pub: PublicKey,
    pub serial: u64,
    pub not_before: u64,
    pub not_after: u64,
    pub issuer_signature: [u8; 64],
}

impl Certificate {
    /// The bytes covered by the issuer signature.
    pub fn signed_bytes(&self) -> [u8; SIGNED_LEN] {
        let mut b = [0u8; SIGNED_LEN];
        b[0] = REC_CERTIFICATE;
        b[1] = CERT_VERSION;
        b[2] = self.subject_role.code();
        b[3..35].copy_from_slice(self.subject_static_pub.as_bytes());
        b[35..43].copy_from_slice(&self.serial.to_le_bytes());
        b[43..51].copy_from_slice(&self.not_before.to_le_bytes());
        b[51..59].copy_from_slice(&self.not_after.to_le_bytes());
        b
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CERTIFICATE_LEN);
        out.extend_from_slice(&self.signed_bytes());
        out.extend_from_slice(&self.issuer_signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PkiError> {
        if bytes.len() != CERTIFICATE_LEN {
            return Err(PkiError::Malformed("certificate length"));
        }
        if bytes[0] != REC_CERTIFICATE || bytes[1] != CERT_VERSION {
            return Err(PkiError::Malformed("certificate header"));
        }
        let subject_role =
            StakeholderRole::from_code(bytes[2]).ok_or(PkiError::Malformed("certificate role"))?;
        let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        Ok(Self {
            subject_role,
            subject_static_pub: PublicKey(bytes[3..35].try_into().unwrap()),
            serial: u64_at(35),
            not_before: u64_at(43),
            not_after: u64_at(51),
            issuer_signature: bytes[SIGNED_LEN..].try_into().unwrap(),
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.encode())
    }

    pub fn from_hex(s: &str) -> Result<Self, PkiError> {
        let bytes = hex::decode(s.trim()).map_err(|_| PkiError::Malformed("certificate hex"))?;
        Self::decode(&bytes)
    }

    pub fn contains(&self, now: u64) -> bool {
        self.not_before <= now && now < self.not_after
    }
}

/// The controller's signing authority.
pub struct CertificateAuthority {
    signing: SigningKey,
    next_serial: u64,
}

impl fmt::Debug for CertificateAuthority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CertificateAuthority")
            .field("public", &self.public_key())
            .field("next_serial", &self.next_serial)
            .finish()
    }
}

/// Creates a CA keypair from 32 bytes of entropy (the Ed25519 seed).
pub fn ca_init(entropy: [u8; 32]) -> CertificateAuthority {
    CertificateAuthority { signing: SigningKey::from_bytes(&entropy), next_serial: 1 }
}

impl CertificateAuthority {
    pub fn public_key(&self) -> CaPublicKey {
        CaPublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.signing.sign(msg).to_bytes()
    }

    pub fn next_serial(&self) -> u64 {
        self.next_serial
    }

    /// Ensures future serials exceed every serial already in circulation.
    pub fn advance_serial_past(&mut self, serial: u64) {
        self.next_serial = self.next_serial.max(serial.saturating_add(1));
    }

    pub fn issue(
        &mut self,
        role: StakeholderRole,
        static_pub: PublicKey,
        validity: Validity,
    ) -> Result<Certificate, PkiError> {
        if validity.not_before >= validity.not_after {
            return Err(PkiError::InvalidValidity);
        }
        let mut cert = Certificate {
            subject_role: role,
            subject_static_pub: static_pub,
            serial: self.next_serial,
            not_before: validity.not_before,
            not_after: validity.not_after,
            issuer_signature: [0; 64],
        };
        cert.issuer_signature = self.sign(&cert.signed_bytes());
        self.next_serial += 1;
        Ok(cert)
    }
}

pub fn issue_certificate(
    ca: &mut CertificateAuthority,
    role: StakeholderRole,
    static_pub: PublicKey,
    validity: Validity,
) -> Result<Certificate, PkiError> {
    ca.issue(role, static_pub, validity)
}

/// Signature, validity window and revocation status, in that order.
pub fn verify_certificate(
    cert: &Certificate,
    ca_pub: &CaPublicKey,
    now: u64,
    is_revoked: impl Fn(u64) -> bool,
) -> Result<(), PkiError> {
    ca_pub.verify(&cert.signed_bytes(), &cert.issuer_signature)?;
    if now < cert.not_before {
        return Err(PkiError::NotYetValid);
    }
    if now >= cert.not_after {
        return Err(PkiError::Expired);
    }
    if is_revoked(cert.serial) {
        return Err(PkiError::Revoked(cert.serial));
    }
    Ok(())
}
