//! Cryptographic primitives used by the management plane.
//!
//! The suite is fixed: X25519 for key agreement, BLAKE2s-256 for hashing,
//! HMAC-BLAKE2s based HKDF for key derivation and ChaCha20-Poly1305 as the
//! AEAD. The Noise IK handshake built on top of these lives in [`handshake`].

pub mod handshake;

use std::fmt;

use blake2::{Blake2s256, Digest};
use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, KeyInit, Nonce};
use hmac::{Mac, SimpleHmac};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use handshake::{
    hs_finalize, hs_initiate, hs_respond, Completed, HandshakeError, HandshakeRole, HandshakeState,
    InitiationMessage, InitiatorGate, Responded, ResponseMessage, SessionKeys, Timestamp,
    ENCRYPTED_STATIC_LEN, ENCRYPTED_TIMESTAMP_LEN, PROLOGUE, PROTOCOL_NAME, TIMESTAMP_LEN,
};

pub const KEY_LEN: usize = 32;
pub const HASH_LEN: usize = 32;
pub const TAG_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    /// The Diffie-Hellman output was all-zero: the peer point has low order.
    #[error("diffie-hellman produced an all-zero shared secret")]
    ZeroSharedSecret,
    #[error("AEAD counter space exhausted")]
    NonceExhausted,
    #[error("AEAD authentication failed")]
    AuthFailure,
}

/// A Curve25519 public point in its 32-byte Montgomery-u encoding.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut out = [0u8; KEY_LEN];
        hex::decode_to_slice(s.trim(), &mut out)?;
        Ok(Self(out))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// A clamped X25519 scalar.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey([u8; KEY_LEN]);

impl PrivateKey {
    /// Clamps `bytes` and wraps them. Every 32-byte input is a valid key.
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(clamp(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(x25519_dalek::x25519(self.0, x25519_dalek::X25519_BASEPOINT_BYTES))
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

impl Drop for PrivateKey {
    fn drop(&mut self) {
        // Best effort; the compiler may still elide this.
        for b in self.0.iter_mut() {
            unsafe { std::ptr::write_volatile(b, 0) };
        }
    }
}

/// Applies the X25519 scalar clamping convention.
pub fn clamp(mut bytes: [u8; KEY_LEN]) -> [u8; KEY_LEN] {
    bytes[0] &= 248;
    bytes[31] &= 127;
    bytes[31] |= 64;
    bytes
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keypair {
    pub private: PrivateKey,
    pub public: PublicKey,
}

/// Derives a keypair from 32 bytes of caller-supplied entropy.
pub fn generate_keypair(entropy: [u8; KEY_LEN]) -> Keypair {
    let private = PrivateKey::from_bytes(entropy);
    let public = private.public_key();
    Keypair { private, public }
}

/// Long-term identity keypair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticKeypair(Keypair);

impl StaticKeypair {
    pub fn from_entropy(entropy: [u8; KEY_LEN]) -> Self {
        Self(generate_keypair(entropy))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut entropy = [0u8; KEY_LEN];
        rng.fill_bytes(&mut entropy);
        Self::from_entropy(entropy)
    }

    pub fn public(&self) -> &PublicKey {
        &self.0.public
    }

    pub fn private(&self) -> &PrivateKey {
        &self.0.private
    }
}

/// Per-handshake keypair. Deliberately not `Clone`: it is consumed by the
/// handshake that uses it.
#[derive(Debug)]
pub struct EphemeralKeypair(Keypair);

impl EphemeralKeypair {
    pub fn from_entropy(entropy: [u8; KEY_LEN]) -> Self {
        Self(generate_keypair(entropy))
    }

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut entropy = [0u8; KEY_LEN];
        rng.fill_bytes(&mut entropy);
        Self::from_entropy(entropy)
    }

    pub fn public(&self) -> &PublicKey {
        &self.0.public
    }

    pub fn private(&self) -> &PrivateKey {
        &self.0.private
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SharedSecret([u8; KEY_LEN]);

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

/// X25519 scalar multiplication of `public` by `private`.
pub fn dh(private: &PrivateKey, public: &PublicKey) -> Result<SharedSecret, CryptoError> {
    let out = x25519_dalek::x25519(private.0, public.0);
    // Constant-time all-zero check.
    if out.iter().fold(0u8, |acc, &b| acc | b) == 0 {
        return Err(CryptoError::ZeroSharedSecret);
    }
    Ok(SharedSecret(out))
}

/// BLAKE2s-256.
pub fn hash(data: &[u8]) -> [u8; HASH_LEN] {
    Blake2s256::digest(data).into()
}

/// BLAKE2s-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> [u8; HASH_LEN] {
    let mut h = Blake2s256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// HMAC-BLAKE2s over the concatenation of `parts`.
pub fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; HASH_LEN] {
    let mut mac = <SimpleHmac<Blake2s256> as Mac>::new_from_slice(key)
        .expect("HMAC accepts keys of any length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// HKDF with HMAC-BLAKE2s: extract `input` under `chaining_key`, then expand
/// into `N` (1..=3) 32-byte outputs. Output `i` is keyed by counter byte `i`.
pub fn kdf<const N: usize>(chaining_key: &[u8; HASH_LEN], input: &[u8]) -> [[u8; HASH_LEN]; N] {
    assert!((1..=3).contains(&N), "kdf produces between one and three outputs");
    let prk = hmac(chaining_key, &[input]);
    let mut out = [[0u8; HASH_LEN]; N];
    for i in 0..N {
        let prev: &[u8] = if i == 0 { &[] } else { &out[i - 1] };
        out[i] = hmac(&prk, &[prev, &[(i + 1) as u8]]);
    }
    out
}

/// Builds the 96-bit AEAD nonce: four zero bytes then the little-endian counter.
pub fn counter_nonce(counter: u64) -> [u8; NONCE_LEN] {
    let mut n = [0u8; NONCE_LEN];
    n[4..].copy_from_slice(&counter.to_le_bytes());
    n
}

/// ChaCha20-Poly1305 with an explicit 96-bit nonce.
pub fn seal_with_nonce(
    key: &[u8; KEY_LEN],
    nonce: &[u8; NONCE_LEN],
    plaintext: &[u8],
    aad: &[u8],
) -> Vec<u8> {
    ChaCha20Poly1305::new(key.into())
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("ChaCha20-Poly1305 encryption is infallible for in-range lengths")
}

pub fn open_with_nonce(
    key: &[u8; KEY_LEN],
    nonce: &[u8; NONCE_LEN],
    ciphertext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.len() < TAG_LEN {
        return Err(CryptoError::AuthFailure);
    }
    ChaCha20Poly1305::new(key.into())
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| CryptoError::AuthFailure)
}

/// Seals `plaintext` under `key` using `counter` as the nonce. The output is
/// `plaintext.len() + 16` bytes.
pub fn aead_seal(
    key: &[u8; KEY_LEN],
    counter: u64,
    plaintext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if counter == u64::MAX {
        return Err(CryptoError::NonceExhausted);
    }
    Ok(seal_with_nonce(key, &counter_nonce(counter), plaintext, aad))
}

pub fn aead_open(
    key: &[u8; KEY_LEN],
    counter: u64,
    ciphertext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    open_with_nonce(key, &counter_nonce(counter), ciphertext, aad)
}
