use std::time::{Duration, Instant};

use crate::crypto::{aead_open, aead_seal, Completed, HandshakeRole, PublicKey, SessionKeys};

use super::replay::ReplayWindow;
use super::wire::{DataMessage, MAX_DATA_PAYLOAD};
use super::TunnelError;

pub const REKEY_AFTER_TIME: Duration = Duration::from_secs(120);
pub const REJECT_AFTER_TIME: Duration = Duration::from_secs(180);
pub const REKEY_AFTER_MESSAGES: u64 = 1 << 60;

/// Session longevity thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RekeyPolicy {
    pub rekey_after_time: Duration,
    pub reject_after_time: Duration,
    pub rekey_after_messages: u64,
}

impl Default for RekeyPolicy {
    fn default() -> Self {
        Self {
            rekey_after_time: REKEY_AFTER_TIME,
            reject_after_time: REJECT_AFTER_TIME,
            rekey_after_messages: REKEY_AFTER_MESSAGES,
        }
    }
}

impl RekeyPolicy {
    /// Scales the reject horizon with the rekey interval (180/120).
    pub fn with_rekey_after(rekey_after: Duration) -> Self {
        Self {
            rekey_after_time: rekey_after,
            reject_after_time: rekey_after * 3 / 2,
            rekey_after_messages: REKEY_AFTER_MESSAGES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RekeyAction {
    NoAction,
    InitiateNewHandshake,
}

/// An established transport session: keys, counters and the replay filter.
#[derive(Debug)]
pub struct TransportSession {
    local_index: u32,
    remote_index: u32,
    keys: SessionKeys,
    send_counter: u64,
    replay: ReplayWindow,
    established_at: Instant,
    role: HandshakeRole,
    remote_static: PublicKey,
    policy: RekeyPolicy,
}

impl TransportSession {
    pub fn new(
        local_index: u32,
        remote_index: u32,
        keys: SessionKeys,
        role: HandshakeRole,
        remote_static: PublicKey,
        replay: ReplayWindow,
        policy: RekeyPolicy,
        now: Instant,
    ) -> Self {
        Self {
            local_index,
            remote_index,
            keys,
            send_counter: 0,
            replay,
            established_at: now,
            role,
            remote_static,
            policy,
        }
    }

    /// Builds a session from a finalized handshake. `remote_index` is needed on
    /// the responder side, where the handshake result does not carry it.
    pub fn from_handshake(
        done: Completed,
        remote_index: u32,
        replay: ReplayWindow,
        policy: RekeyPolicy,
        now: Instant,
    ) -> Self {
        let remote_index = done.remote_index.unwrap_or(remote_index);
        Self::new(
            done.local_index,
            remote_index,
            done.keys,
            done.role,
            done.remote_static,
            replay,
            policy,
            now,
        )
    }

    pub fn local_index(&self) -> u32 {
        self.local_index
    }

    pub fn remote_index(&self) -> u32 {
        self.remote_index
    }

    pub fn remote_static(&self) -> &PublicKey {
        &self.remote_static
    }

    pub fn role(&self) -> HandshakeRole {
        self.role
    }

    pub fn send_counter(&self) -> u64 {
        self.send_counter
    }

    pub fn established_at(&self) -> Instant {
        self.established_at
    }

    pub fn policy(&self) -> &RekeyPolicy {
        &self.policy
    }

    pub fn replay_window(&self) -> &ReplayWindow {
        &self.replay
    }

    pub fn age(&self, now: Instant) -> Duration {
        now.saturating_duration_since(self.established_at)
    }

    pub fn is_expired(&self, now: Instant) -> bool {
        self.age(now) >= self.policy.reject_after_time
    }

    /// Can this session still carry `n` more outbound messages at `now`?
    fn ensure_can_send(&self, n: u64, now: Instant) -> Result<(), TunnelError> {
        let last = self.send_counter.checked_add(n).ok_or(TunnelError::RekeyRequired)?;
        if last > self.policy.rekey_after_messages || self.is_expired(now) {
            return Err(TunnelError::RekeyRequired);
        }
        Ok(())
    }

    /// Reserves `n` consecutive counters, returning the first.
    pub(crate) fn reserve_counters(&mut self, n: u64, now: Instant) -> Result<u64, TunnelError> {
        self.ensure_can_send(n, now)?;
        let first = self.send_counter;
        self.send_counter += n;
        Ok(first)
    }

    pub(crate) fn seal_at(&self, counter: u64, payload: &[u8]) -> Result<DataMessage, TunnelError> {
        if payload.len() > MAX_DATA_PAYLOAD {
            return Err(TunnelError::PayloadTooLarge(payload.len()));
        }
        let ciphertext = aead_seal(&self.keys.send, counter, payload, &[])
            .map_err(|_| TunnelError::RekeyRequired)?;
        Ok(DataMessage { receiver_index: self.remote_index, counter, ciphertext })
    }

    /// Encrypts `payload` under the next send counter.
    pub fn send(&mut self, payload: &[u8], now: Instant) -> Result<DataMessage, TunnelError> {
        if payload.len() > MAX_DATA_PAYLOAD {
            return Err(TunnelError::PayloadTooLarge(payload.len()));
        }
        let counter = self.reserve_counters(1, now)?;
        self.seal_at(counter, payload)
    }

    /// Routing and freshness checks that precede decryption.
    pub(crate) fn precheck(&self, msg: &DataMessage, now: Instant) -> Result<(), TunnelError> {
        if msg.receiver_index != self.local_index {
            return Err(TunnelError::WrongSession);
        }
        if self.is_expired(now) {
            return Err(TunnelError::SessionExpired);
        }
        if !self.replay.check(msg.counter) {
            return Err(TunnelError::ReplayRejected);
        }
        Ok(())
    }

    /// Decrypts without touching the replay window.
    pub(crate) fn open_only(&self, msg: &DataMessage) -> Result<Vec<u8>, TunnelError> {
        aead_open(&self.keys.recv, msg.counter, &msg.ciphertext, &[])
            .map_err(|_| TunnelError::AuthFailure)
    }

    /// Records `counter` after a successful decryption.
    pub(crate) fn commit(&mut self, counter: u64) -> Result<(), TunnelError> {
        if self.replay.accept(counter) {
            Ok(())
        } else {
            Err(TunnelError::ReplayRejected)
        }
    }

    /// Authenticates and decrypts `msg`. The replay window only moves once the
    /// tag has verified.
    pub fn recv(&mut self, msg: &DataMessage, now: Instant) -> Result<Vec<u8>, TunnelError> {
        self.precheck(msg, now)?;
        let payload = self.open_only(msg)?;
        self.commit(msg.counter)?;
        Ok(payload)
    }

    pub fn maybe_rekey(&self, now: Instant) -> RekeyAction {
        if self.age(now) >= self.policy.rekey_after_time
            || self.send_counter >= self.policy.rekey_after_messages
        {
            RekeyAction::InitiateNewHandshake
        } else {
            RekeyAction::NoAction
        }
    }
}

/// Free-function form of [`TransportSession::send`].
pub fn session_send(
    session: &mut TransportSession,
    payload: &[u8],
    now: Instant,
) -> Result<DataMessage, TunnelError> {
    session.send(payload, now)
}

/// Free-function form of [`TransportSession::recv`].
pub fn session_recv(
    session: &mut TransportSession,
    msg: &DataMessage,
    now: Instant,
) -> Result<Vec<u8>, TunnelError> {
    session.recv(msg, now)
}

pub fn maybe_rekey(session: &TransportSession, now: Instant) -> RekeyAction {
    session.maybe_rekey(now)
}
