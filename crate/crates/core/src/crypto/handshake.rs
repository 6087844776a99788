//! Noise `IK` handshake over the crate's primitive suite.
//!
//! Pattern, with the responder's static key known in advance:
//!
//! ```text
//!   <- s
//!   ...
//!   -> e, es, s, ss      (payload: 12-byte timestamp)
//!   <- e, ee, se         (payload: empty)
//! ```
//!
//! Every AEAD key produced by `MixKey` is used exactly once, so all handshake
//! encryptions use counter 0.

use std::fmt;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use thiserror::Error;

use super::{
    aead_open, aead_seal, dh, hash, hash_parts, kdf, CryptoError, EphemeralKeypair, PublicKey,
    StaticKeypair, HASH_LEN, KEY_LEN, TAG_LEN,
};

pub const PROTOCOL_NAME: &[u8] = b"Noise_IK_25519_ChaChaPoly_BLAKE2s";
pub const PROLOGUE: &[u8] = b"ibn-mgmt-plane v1";
pub const TIMESTAMP_LEN: usize = 12;
pub const ENCRYPTED_STATIC_LEN: usize = KEY_LEN + TAG_LEN;
pub const ENCRYPTED_TIMESTAMP_LEN: usize = TIMESTAMP_LEN + TAG_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HandshakeError {
    #[error("diffie-hellman produced an all-zero shared secret")]
    ZeroSharedSecret,
    #[error("handshake message failed authentication")]
    AuthFailure,
    #[error("initiator static key is not authorized")]
    Unauthorized,
    #[error("initiation timestamp is not newer than the last accepted one")]
    StaleTimestamp,
    #[error("handshake step does not match the local role")]
    UnexpectedMessage,
}

impl From<CryptoError> for HandshakeError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::ZeroSharedSecret => HandshakeError::ZeroSharedSecret,
            // Handshake keys are single use; exhaustion cannot happen here.
            CryptoError::NonceExhausted | CryptoError::AuthFailure => HandshakeError::AuthFailure,
        }
    }
}

/// 12-byte monotonic timestamp: big-endian seconds (8) then nanoseconds (4).
/// Byte order makes lexicographic and chronological order agree.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub [u8; TIMESTAMP_LEN]);

impl Timestamp {
    pub fn from_parts(secs: u64, nanos: u32) -> Self {
        let mut b = [0u8; TIMESTAMP_LEN];
        b[..8].copy_from_slice(&secs.to_be_bytes());
        b[8..].copy_from_slice(&nanos.to_be_bytes());
        Self(b)
    }

    pub fn from_unix(since_epoch: Duration) -> Self {
        Self::from_parts(since_epoch.as_secs(), since_epoch.subsec_nanos())
    }

    pub fn now() -> Self {
        Self::from_unix(SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default())
    }

    pub fn secs(&self) -> u64 {
        u64::from_be_bytes(self.0[..8].try_into().unwrap())
    }

    pub fn nanos(&self) -> u32 {
        u32::from_be_bytes(self.0[8..].try_into().unwrap())
    }
}

impl fmt::Debug for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Timestamp({}.{:09})", self.secs(), self.nanos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandshakeRole {
    Initiator,
    Responder,
}

/// First handshake message, initiator to responder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitiationMessage {
    pub sender_index: u32,
    pub ephemeral: PublicKey,
    pub encrypted_static: [u8; ENCRYPTED_STATIC_LEN],
    pub encrypted_timestamp: [u8; ENCRYPTED_TIMESTAMP_LEN],
}

/// Second handshake message, responder to initiator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMessage {
    pub sender_index: u32,
    pub receiver_index: u32,
    pub ephemeral: PublicKey,
    pub encrypted_empty: [u8; TAG_LEN],
}

/// Access-control hook consulted by the responder once the initiator's static
/// key has been decrypted.
pub trait InitiatorGate {
    fn authorize(&self, initiator_static: &PublicKey) -> bool;

    /// Latest timestamp accepted from this static key, if any.
    fn last_timestamp(&self, _initiator_static: &PublicKey) -> Option<Timestamp> {
        None
    }
}

impl<F: Fn(&PublicKey) -> bool> InitiatorGate for F {
    fn authorize(&self, initiator_static: &PublicKey) -> bool {
        self(initiator_static)
    }
}

/// Two 32-byte transport keys, oriented from the local side.
#[derive(Clone, PartialEq, Eq)]
pub struct SessionKeys {
    pub send: [u8; KEY_LEN],
    pub recv: [u8; KEY_LEN],
}

impl fmt::Debug for SessionKeys {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKeys(..)")
    }
}

pub struct HandshakeState {
    chaining_key: [u8; HASH_LEN],
    transcript_hash: [u8; HASH_LEN],
    local_ephemeral: EphemeralKeypair,
    remote_ephemeral: Option<PublicKey>,
    local_static: StaticKeypair,
    remote_static: PublicKey,
    role: HandshakeRole,
    local_index: u32,
}

impl fmt::Debug for HandshakeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HandshakeState")
            .field("role", &self.role)
            .field("local_index", &self.local_index)
            .field("remote_static", &self.remote_static)
            .finish_non_exhaustive()
    }
}

impl HandshakeState {
    /// `InitializeSymmetric` + prologue + the responder-static pre-message.
    fn start(
        role: HandshakeRole,
        local_static: StaticKeypair,
        remote_static: PublicKey,
        responder_static: &PublicKey,
        local_ephemeral: EphemeralKeypair,
        local_index: u32,
    ) -> Self {
        let initial = if PROTOCOL_NAME.len() <= HASH_LEN {
            let mut h = [0u8; HASH_LEN];
            h[..PROTOCOL_NAME.len()].copy_from_slice(PROTOCOL_NAME);
            h
        } else {
            hash(PROTOCOL_NAME)
        };
        let mut st = Self {
            chaining_key: initial,
            transcript_hash: initial,
            local_ephemeral,
            remote_ephemeral: None,
            local_static,
            remote_static,
            role,
            local_index,
        };
        st.mix_hash(PROLOGUE);
        st.mix_hash(responder_static.as_bytes());
        st
    }

    fn mix_hash(&mut self, data: &[u8]) {
        self.transcript_hash = hash_parts(&[&self.transcript_hash, data]);
    }

    /// Returns the fresh AEAD key.
    fn mix_key(&mut self, input: &[u8]) -> [u8; KEY_LEN] {
        let [ck, k] = kdf::<2>(&self.chaining_key, input);
        self.chaining_key = ck;
        k
    }

    fn encrypt_and_hash(&mut self, key: &[u8; KEY_LEN], plaintext: &[u8]) -> Vec<u8> {
        let ct = aead_seal(key, 0, plaintext, &self.transcript_hash)
            .expect("counter zero is always available");
        self.mix_hash(&ct);
        ct
    }

    fn decrypt_and_hash(
        &mut self,
        key: &[u8; KEY_LEN],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, HandshakeError> {
        let pt = aead_open(key, 0, ciphertext, &self.transcript_hash)?;
        self.mix_hash(ciphertext);
        Ok(pt)
    }

    pub fn role(&self) -> HandshakeRole {
        self.role
    }

    pub fn chaining_key(&self) -> &[u8; HASH_LEN] {
        &self.chaining_key
    }

    pub fn transcript_hash(&self) -> &[u8; HASH_LEN] {
        &self.transcript_hash
    }

    pub fn remote_static(&self) -> &PublicKey {
        &self.remote_static
    }

    pub fn remote_ephemeral(&self) -> Option<&PublicKey> {
        self.remote_ephemeral.as_ref()
    }

    pub fn local_index(&self) -> u32 {
        self.local_index
    }
}

/// Builds the initiation message (`e, es, s, ss`) toward a responder whose
/// static key was obtained out of band.
pub fn hs_initiate(
    local_static: &StaticKeypair,
    responder_static: &PublicKey,
    local_ephemeral: EphemeralKeypair,
    timestamp: Timestamp,
    sender_index: u32,
) -> Result<(HandshakeState, InitiationMessage), HandshakeError> {
    if responder_static.is_zero() {
        return Err(HandshakeError::ZeroSharedSecret);
    }
    let mut st = HandshakeState::start(
        HandshakeRole::Initiator,
        local_static.clone(),
        *responder_static,
        responder_static,
        local_ephemeral,
        sender_index,
    );

    let e_pub = *st.local_ephemeral.public();
    st.mix_hash(e_pub.as_bytes());

    let es = dh(st.local_ephemeral.private(), responder_static)?;
    let k = st.mix_key(es.as_bytes());
    let enc_static = st.encrypt_and_hash(&k, local_static.public().as_bytes());

    let ss = dh(local_static.private(), responder_static)?;
    let k = st.mix_key(ss.as_bytes());
    let enc_ts = st.encrypt_and_hash(&k, &timestamp.0);

    let msg = InitiationMessage {
        sender_index,
        ephemeral: e_pub,
        encrypted_static: enc_static.try_into().expect("32 + 16 bytes"),
        encrypted_timestamp: enc_ts.try_into().expect("12 + 16 bytes"),
    };
    Ok((st, msg))
}

/// Successful responder outcome.
#[derive(Debug)]
pub struct Responded {
    pub state: HandshakeState,
    pub response: ResponseMessage,
    pub initiator_static: PublicKey,
    pub timestamp: Timestamp,
}

/// Consumes an initiation, checks it against `gate` and produces the response
/// (`e, ee, se`). The caller records `timestamp` for the initiator once it
/// commits to the new session.
pub fn hs_respond(
    local_static: &StaticKeypair,
    gate: &impl InitiatorGate,
    msg: &InitiationMessage,
    local_ephemeral: EphemeralKeypair,
    sender_index: u32,
) -> Result<Responded, HandshakeError> {
    let mut st = HandshakeState::start(
        HandshakeRole::Responder,
        local_static.clone(),
        PublicKey([0u8; KEY_LEN]),
        local_static.public(),
        local_ephemeral,
        sender_index,
    );

    st.mix_hash(msg.ephemeral.as_bytes());
    st.remote_ephemeral = Some(msg.ephemeral);

    let es = dh(local_static.private(), &msg.ephemeral)?;
    let k = st.mix_key(es.as_bytes());
    let static_bytes = st.decrypt_and_hash(&k, &msg.encrypted_static)?;
    let initiator_static = PublicKey(static_bytes.try_into().expect("decrypted static is 32 bytes"));

    if !gate.authorize(&initiator_static) {
        return Err(HandshakeError::Unauthorized);
    }

    let ss = dh(local_static.private(), &initiator_static)?;
    let k = st.mix_key(ss.as_bytes());
    let ts_bytes = st.decrypt_and_hash(&k, &msg.encrypted_timestamp)?;
    let timestamp = Timestamp(ts_bytes.try_into().expect("decrypted timestamp is 12 bytes"));
    if let Some(last) = gate.last_timestamp(&initiator_static) {
        if timestamp <= last {
            return Err(HandshakeError::StaleTimestamp);
        }
    }
    st.remote_static = initiator_static;

    let e_pub = *st.local_ephemeral.public();
    st.mix_hash(e_pub.as_bytes());
    let ee = dh(st.local_ephemeral.private(), &msg.ephemeral)?;
    st.mix_key(ee.as_bytes());
    let se = dh(st.local_ephemeral.private(), &initiator_static)?;
    let k = st.mix_key(se.as_bytes());
    let tag = st.encrypt_and_hash(&k, &[]);

    let response = ResponseMessage {
        sender_index,
        receiver_index: msg.sender_index,
        ephemeral: e_pub,
        encrypted_empty: tag.try_into().expect("empty plaintext seals to a bare tag"),
    };
    Ok(Responded { state: st, response, initiator_static, timestamp })
}

/// Result of a completed handshake.
#[derive(Debug)]
pub struct Completed {
    pub keys: SessionKeys,
    pub transcript_hash: [u8; HASH_LEN],
    pub remote_static: PublicKey,
    pub local_index: u32,
    /// The peer's session index (the initiation's or response's sender index).
    pub remote_index: Option<u32>,
    pub role: HandshakeRole,
}

/// Derives transport keys. The initiator passes the response it received; the
/// responder passes `None` right after emitting its response.
pub fn hs_finalize(
    mut state: HandshakeState,
    msg: Option<&ResponseMessage>,
) -> Result<Completed, HandshakeError> {
    let remote_index = match (state.role, msg) {
        (HandshakeRole::Initiator, Some(resp)) => {
            state.mix_hash(resp.ephemeral.as_bytes());
            state.remote_ephemeral = Some(resp.ephemeral);
            let ee = dh(state.local_ephemeral.private(), &resp.ephemeral)?;
            state.mix_key(ee.as_bytes());
            let se = dh(state.local_static.private(), &resp.ephemeral)?;
            let k = state.mix_key(se.as_bytes());
            state.decrypt_and_hash(&k, &resp.encrypted_empty)?;
            Some(resp.sender_index)
        }
        (HandshakeRole::Responder, None) => None,
        _ => return Err(HandshakeError::UnexpectedMessage),
    };

    let [initiator_to_responder, responder_to_initiator] = kdf::<2>(&state.chaining_key, &[]);
    let keys = match state.role {
        HandshakeRole::Initiator => {
            SessionKeys { send: initiator_to_responder, recv: responder_to_initiator }
        }
        HandshakeRole::Responder => {
            SessionKeys { send: responder_to_initiator, recv: initiator_to_responder }
        }
    };
    Ok(Completed {
        keys,
        transcript_hash: state.transcript_hash,
        remote_static: state.remote_static,
        local_index: state.local_index,
        remote_index,
        role: state.role,
    })
}
