use std::collections::{BTreeMap, BTreeSet};

use super::cert::{verify_certificate, CaPublicKey, Certificate};
use super::{PkiError, StakeholderRole};
use crate::crypto::PublicKey;

/// One line of the registry's append-only log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryLogEntry {
    Register(Certificate),
    Revoke(u64),
}

impl RegistryLogEntry {
    pub fn to_line(&self) -> String {
        match self {
            Self::Register(c) => format!("register {}", c.to_hex()),
            Self::Revoke(s) => format!("revoke {s}"),
        }
    }

    pub fn from_line(line: &str) -> Result<Self, PkiError> {
        let (kind, arg) = line.trim().split_once(' ').ok_or(PkiError::Malformed("log line"))?;
        match kind {
            "register" => Ok(Self::Register(Certificate::from_hex(arg)?)),
            "revoke" => arg
                .trim()
                .parse()
                .map(Self::Revoke)
                .map_err(|_| PkiError::Malformed("log serial")),
            _ => Err(PkiError::Malformed("log entry kind")),
        }
    }
}

/// Active certificate per role plus the revocation set.
#[derive(Debug, Clone)]
pub struct PeerRegistry {
    ca_pub: CaPublicKey,
    active: BTreeMap<StakeholderRole, Certificate>,
    known: BTreeMap<u64, Certificate>,
    revoked: BTreeSet<u64>,
}

impl PeerRegistry {
    pub fn new(ca_pub: CaPublicKey) -> Self {
        Self { ca_pub, active: BTreeMap::new(), known: BTreeMap::new(), revoked: BTreeSet::new() }
    }

    pub fn ca_public_key(&self) -> &CaPublicKey {
        &self.ca_pub
    }

    pub fn is_revoked(&self, serial: u64) -> bool {
        self.revoked.contains(&serial)
    }

    pub fn verify(&self, cert: &Certificate, now: u64) -> Result<(), PkiError> {
        verify_certificate(cert, &self.ca_pub, now, |s| self.is_revoked(s))
    }

    /// Records a certificate the CA issued without activating it, so that its
    /// serial can later be revoked.
    pub fn note_issued(&mut self, cert: &Certificate) {
        self.known.insert(cert.serial, cert.clone());
    }

    /// Verifies `cert` and makes it the role's only active certificate.
    /// Returns the certificate it replaced, whose key stops authorizing.
    pub fn register_peer(
        &mut self,
        cert: Certificate,
        now: u64,
    ) -> Result<Option<Certificate>, PkiError> {
        self.verify(&cert, now)?;
        Ok(self.install(cert))
    }

    fn install(&mut self, cert: Certificate) -> Option<Certificate> {
        self.known.insert(cert.serial, cert.clone());
        self.active.insert(cert.subject_role, cert)
    }

    pub fn lookup_static_key(&self, role: StakeholderRole) -> Result<&Certificate, PkiError> {
        self.active.get(&role).ok_or(PkiError::UnknownRole(role))
    }

    /// Idempotent; unknown serials are an error.
    pub fn revoke(&mut self, serial: u64) -> Result<(), PkiError> {
        if !self.known.contains_key(&serial) {
            return Err(PkiError::UnknownSerial(serial));
        }
        self.revoked.insert(serial);
        Ok(())
    }

    /// The peer role whose active, unexpired, unrevoked certificate carries
    /// `static_pub`, if any. The controller's own certificate never matches.
    pub fn authorize(&self, static_pub: &PublicKey, now: u64) -> Option<StakeholderRole> {
        self.active
            .values()
            .find(|c| {
                c.subject_role.is_peer()
                    && &c.subject_static_pub == static_pub
                    && c.contains(now)
                    && !self.revoked.contains(&c.serial)
            })
            .map(|c| c.subject_role)
    }

    pub fn active(&self) -> impl Iterator<Item = &Certificate> {
        self.active.values()
    }

    pub fn revoked(&self) -> impl Iterator<Item = u64> + '_ {
        self.revoked.iter().copied()
    }

    /// Any certificate this registry has seen, active or not.
    pub fn certificate(&self, serial: u64) -> Option<&Certificate> {
        self.known.get(&serial)
    }

    pub fn max_serial(&self) -> u64 {
        self.known.keys().next_back().copied().unwrap_or(0)
    }

    /// Replays a log entry. Signatures are re-checked; validity windows are
    /// not, since `authorize` applies them at use time.
    pub fn apply(&mut self, entry: &RegistryLogEntry) -> Result<(), PkiError> {
        match entry {
            RegistryLogEntry::Register(cert) => {
                self.ca_pub.verify(&cert.signed_bytes(), &cert.issuer_signature)?;
                self.install(cert.clone());
                Ok(())
            }
            RegistryLogEntry::Revoke(serial) => {
                self.revoked.insert(*serial);
                Ok(())
            }
        }
    }
}
