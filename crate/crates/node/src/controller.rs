//! The controller's protocol core: handshake responder gated by the peer
//! registry, per-role routing over confirmed sessions, reliable intent
//! delivery, report handling and auditing.
//!
//! The core performs no I/O. Callers feed it datagrams and timer ticks and
//! transmit what it returns; persistence and audit records are drained with
//! the `take_*` methods.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::net::SocketAddr;
use std::time::Duration;

use ibn_core::crypto::{
    hs_finalize, hs_respond, EphemeralKeypair, HandshakeError, InitiatorGate, PublicKey,
    StaticKeypair, Timestamp,
};
use ibn_core::intent::{IntentId, LifecycleState};
use ibn_core::pki::{
    CaPublicKey, Certificate, CertificateAuthority, EnrollmentRequest, PeerRegistry, PkiError,
    RegistryLogEntry, RevocationRequest, StakeholderRole, Validity,
};
use ibn_core::plane::{AckStatus, Frame, Op};
use ibn_core::tunnel::{
    decode_message, encode_message, DataMessage, Message, RekeyPolicy, ReplayWindow,
    SessionTable, TransportSession, TunnelError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::audit::{AuditEvent, AuditKind};
use crate::records::{GlobalIntentRecord, IntentStore, RecordError, RecordLogEntry, Submitted};
use crate::time::{Now, RetryPolicy};

/// How far an enrollment timestamp may drift from the controller's clock.
pub const ENROLL_SKEW_SECS: u64 = 300;
pub const CERT_LIFETIME_SECS: u64 = 365 * 24 * 3600;
const DEDUP_CAPACITY: usize = 1 << 16;

#[derive(Debug, Clone)]
pub struct ControllerSettings {
    pub replay_window: usize,
    pub policy: RekeyPolicy,
    pub park_capacity: usize,
    pub retry: RetryPolicy,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            replay_window: ibn_core::tunnel::replay::DEFAULT_WINDOW,
            policy: RekeyPolicy::default(),
            park_capacity: 1024,
            retry: RetryPolicy::default(),
        }
    }
}

/// Counters exposed for status output and tests.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ControllerStats {
    pub handshakes: u64,
    pub sessions_confirmed: u64,
    pub envelopes_accepted: u64,
    pub envelopes_rejected: u64,
    pub deliveries_sent: u64,
    pub audited: u64,
}

/// A datagram to transmit.
pub type Outgoing = (SocketAddr, Vec<u8>);

#[derive(Debug)]
struct PeerSession {
    transport: TransportSession,
    role: StakeholderRole,
    addr: SocketAddr,
    /// Set by the first authenticated data message on this session.
    confirmed: bool,
}

#[derive(Debug)]
struct Pending {
    intent: IntentId,
    payload: Vec<u8>,
    tries: u32,
    next_at: Option<std::time::Instant>,
}

#[derive(Debug, Default)]
struct RoleQueue {
    next_seq: u32,
    pending: BTreeMap<u32, Pending>,
}

#[derive(Debug, Default)]
struct Dedup {
    seen: HashMap<(StakeholderRole, IntentId, u32), AckStatus>,
    order: VecDeque<(StakeholderRole, IntentId, u32)>,
}

impl Dedup {
    fn get(&self, key: &(StakeholderRole, IntentId, u32)) -> Option<AckStatus> {
        self.seen.get(key).copied()
    }

    fn insert(&mut self, key: (StakeholderRole, IntentId, u32), status: AckStatus) {
        if self.order.len() == DEDUP_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.seen.remove(&old);
            }
        }
        self.seen.insert(key, status);
        self.order.push_back(key);
    }
}

/// Row of the `peers` listing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerStatus {
    pub certificate: Certificate,
    pub revoked: bool,
    pub connected: bool,
}

pub struct Controller {
    static_key: StaticKeypair,
    ca: CertificateAuthority,
    enroll_master: [u8; 32],
    registry: PeerRegistry,
    settings: ControllerSettings,
    rng: ChaCha20Rng,
    sessions: SessionTable<PeerSession>,
    routes: HashMap<StakeholderRole, u32>,
    last_timestamp: HashMap<PublicKey, Timestamp>,
    store: IntentStore,
    parked: VecDeque<IntentId>,
    outbound: HashMap<StakeholderRole, RoleQueue>,
    dedup: Dedup,
    audit: Vec<AuditEvent>,
    record_log: Vec<RecordLogEntry>,
    registry_log: Vec<RegistryLogEntry>,
    stats: ControllerStats,
}

struct Gate<'a> {
    registry: &'a PeerRegistry,
    last: &'a HashMap<PublicKey, Timestamp>,
    unix: u64,
}

impl InitiatorGate for Gate<'_> {
    fn authorize(&self, k: &PublicKey) -> bool {
        self.registry.authorize(k, self.unix).is_some()
    }

    fn last_timestamp(&self, k: &PublicKey) -> Option<Timestamp> {
        self.last.get(k).copied()
    }
}

impl Controller {
    pub fn new(
        static_key: StaticKeypair,
        ca: CertificateAuthority,
        enroll_master: [u8; 32],
        settings: ControllerSettings,
        rng_seed: [u8; 32],
    ) -> Self {
        let registry = PeerRegistry::new(ca.public_key());
        Self {
            static_key,
            ca,
            enroll_master,
            registry,
            settings,
            rng: ChaCha20Rng::from_seed(rng_seed),
            sessions: SessionTable::new(),
            routes: HashMap::new(),
            last_timestamp: HashMap::new(),
            store: IntentStore::new(),
            parked: VecDeque::new(),
            outbound: HashMap::new(),
            dedup: Dedup::default(),
            audit: Vec::new(),
            record_log: Vec::new(),
            registry_log: Vec::new(),
            stats: ControllerStats::default(),
        }
    }

    /// Rebuilds registry and intent state from persisted logs. Intents whose
    /// delivery was never acknowledged are parked again.
    pub fn restore(
        &mut self,
        registry: impl IntoIterator<Item = RegistryLogEntry>,
        records: impl IntoIterator<Item = RecordLogEntry>,
    ) -> Result<(), PkiError> {
        for e in registry {
            self.registry.apply(&e)?;
        }
        self.ca.advance_serial_past(self.registry.max_serial());
        for e in records {
            self.store.apply(&e);
        }
        let undelivered: Vec<IntentId> =
            self.store.iter().filter(|r| !r.delivered).map(|r| r.intent.id).collect();
        self.parked.extend(undelivered);
        Ok(())
    }

    /// Issues and registers a certificate for the controller's own static
    /// key if the registry does not already hold one.
    pub fn ensure_own_certificate(&mut self, now: Now) -> Result<Certificate, PkiError> {
        if let Ok(c) = self.registry.lookup_static_key(StakeholderRole::Ibnsc) {
            if c.subject_static_pub == *self.static_key.public()
                && c.contains(now.unix())
                && !self.registry.is_revoked(c.serial)
            {
                return Ok(c.clone());
            }
        }
        let cert = self.ca.issue(
            StakeholderRole::Ibnsc,
            *self.static_key.public(),
            Validity::starting_at(now.unix(), CERT_LIFETIME_SECS),
        )?;
        self.registry.register_peer(cert.clone(), now.unix())?;
        self.registry_log.push(RegistryLogEntry::Register(cert.clone()));
        Ok(cert)
    }

    pub fn static_public(&self) -> &PublicKey {
        self.static_key.public()
    }

    pub fn ca_public(&self) -> CaPublicKey {
        self.ca.public_key()
    }

    pub fn registry(&self) -> &PeerRegistry {
        &self.registry
    }

    pub fn store(&self) -> &IntentStore {
        &self.store
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn record(&self, id: &IntentId) -> Option<&GlobalIntentRecord> {
        self.store.get(id)
    }

    pub fn parked(&self) -> impl Iterator<Item = &IntentId> {
        self.parked.iter()
    }

    pub fn routed_roles(&self) -> Vec<StakeholderRole> {
        let mut v: Vec<_> = self.routes.keys().copied().collect();
        v.sort();
        v
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn confirmed_session_count(&self) -> usize {
        self.sessions.iter().filter(|(_, s)| s.confirmed).count()
    }

    pub fn peers(&self) -> Vec<PeerStatus> {
        self.registry
            .active()
            .map(|c| PeerStatus {
                certificate: c.clone(),
                revoked: self.registry.is_revoked(c.serial),
                connected: self.routes.contains_key(&c.subject_role),
            })
            .collect()
    }

    pub fn take_audit(&mut self) -> Vec<AuditEvent> {
        std::mem::take(&mut self.audit)
    }

    pub fn take_record_log(&mut self) -> Vec<RecordLogEntry> {
        std::mem::take(&mut self.record_log)
    }

    pub fn take_registry_log(&mut self) -> Vec<RegistryLogEntry> {
        std::mem::take(&mut self.registry_log)
    }

    fn audit(
        &mut self,
        now: Now,
        kind: AuditKind,
        source: Option<SocketAddr>,
        role: Option<StakeholderRole>,
        detail: impl Into<String>,
    ) {
        self.stats.audited += 1;
        let detail = detail.into();
        tracing::warn!(?kind, ?source, ?role, %detail, "audit");
        self.audit.push(AuditEvent { at: now.unix(), kind, source, role, detail });
    }

    // ---- registry interface ----

    /// Bootstrap enrollment: verifies the request's tag, issues a certificate
    /// and makes it the role's active one. A replaced key loses its sessions.
    pub fn enroll(
        &mut self,
        req: &EnrollmentRequest,
        now: Now,
        source: Option<SocketAddr>,
    ) -> Result<Certificate, PkiError> {
        let result = self.enroll_inner(req, now);
        if let Err(e) = &result {
            self.audit(now, AuditKind::EnrollmentRejected, source, Some(req.role), e.to_string());
        }
        result
    }

    fn enroll_inner(&mut self, req: &EnrollmentRequest, now: Now) -> Result<Certificate, PkiError> {
        req.verify(&self.enroll_master)?;
        if !req.role.is_peer() {
            return Err(PkiError::NotAPeerRole(req.role));
        }
        if now.unix().abs_diff(req.timestamp) > ENROLL_SKEW_SECS {
            return Err(PkiError::StaleRequest);
        }
        let cert = self.ca.issue(
            req.role,
            req.static_pub,
            Validity::starting_at(now.unix(), CERT_LIFETIME_SECS),
        )?;
        let replaced = self.registry.register_peer(cert.clone(), now.unix())?;
        self.registry_log.push(RegistryLogEntry::Register(cert.clone()));
        if let Some(old) = replaced.filter(|o| o.subject_static_pub != cert.subject_static_pub) {
            self.drop_sessions_for(&old.subject_static_pub, now, "certificate replaced");
        }
        Ok(cert)
    }

    /// Processes a CA-signed revocation order.
    pub fn revoke_request(&mut self, req: &RevocationRequest, now: Now) -> Result<(), PkiError> {
        req.verify(&self.ca.public_key())?;
        self.revoke(req.serial, now)
    }

    pub fn revoke(&mut self, serial: u64, now: Now) -> Result<(), PkiError> {
        self.registry.revoke(serial)?;
        self.registry_log.push(RegistryLogEntry::Revoke(serial));
        let key = self.registry.certificate(serial).map(|c| c.subject_static_pub);
        if let Some(k) = key {
            self.drop_sessions_for(&k, now, &format!("certificate {serial} revoked"));
        }
        Ok(())
    }

    fn drop_sessions_for(&mut self, key: &PublicKey, now: Now, why: &str) {
        let doomed: Vec<(u32, StakeholderRole)> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.transport.remote_static() == key)
            .map(|(i, s)| (*i, s.role))
            .collect();
        for (idx, role) in &doomed {
            self.sessions.remove(*idx);
            if self.routes.get(role) == Some(idx) {
                self.routes.remove(role);
            }
        }
        self.last_timestamp.remove(key);
        if !doomed.is_empty() {
            let role = doomed[0].1;
            self.audit(now, AuditKind::Revoked, None, Some(role), format!("{why}; {} session(s) closed", doomed.len()));
        }
    }

    // ---- datagram path ----

    pub fn handle_datagram(&mut self, bytes: &[u8], from: SocketAddr, now: Now) -> Vec<Outgoing> {
        match decode_message(bytes) {
            Err(e) => {
                self.audit(now, AuditKind::Malformed, Some(from), None, e.to_string());
                Vec::new()
            }
            Ok(Message::Initiation(m)) => self.on_initiation(&m, from, now),
            Ok(Message::Response(_)) => {
                self.audit(now, AuditKind::Malformed, Some(from), None, "unsolicited handshake response");
                Vec::new()
            }
            Ok(Message::Data(d)) => self.on_data(d, from, now),
        }
    }

    fn on_initiation(
        &mut self,
        m: &ibn_core::crypto::InitiationMessage,
        from: SocketAddr,
        now: Now,
    ) -> Vec<Outgoing> {
        let eph = EphemeralKeypair::random(&mut self.rng);
        let idx = self.sessions.allocate_index(&mut self.rng);
        let gate = Gate { registry: &self.registry, last: &self.last_timestamp, unix: now.unix() };
        let responded = match hs_respond(&self.static_key, &gate, m, eph, idx) {
            Ok(r) => r,
            Err(e) => {
                let kind = match e {
                    HandshakeError::Unauthorized => AuditKind::Unauthorized,
                    HandshakeError::StaleTimestamp => AuditKind::StaleHandshake,
                    HandshakeError::AuthFailure | HandshakeError::ZeroSharedSecret => {
                        AuditKind::HandshakeAuthFailure
                    }
                    HandshakeError::UnexpectedMessage => AuditKind::Malformed,
                };
                self.audit(now, kind, Some(from), None, e.to_string());
                return Vec::new();
            }
        };
        let Some(role) = self.registry.authorize(&responded.initiator_static, now.unix()) else {
            return Vec::new();
        };
        self.last_timestamp.insert(responded.initiator_static, responded.timestamp);
        let response = Message::Response(responded.response);
        let done = match hs_finalize(responded.state, None) {
            Ok(d) => d,
            Err(e) => {
                self.audit(now, AuditKind::HandshakeAuthFailure, Some(from), Some(role), e.to_string());
                return Vec::new();
            }
        };
        let window = ReplayWindow::new(self.settings.replay_window).unwrap_or_default();
        let transport = TransportSession::from_handshake(done, m.sender_index, window, self.settings.policy, now.instant);

        // Only the newest unconfirmed session per role is kept.
        let stale: Vec<u32> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.role == role && !s.confirmed)
            .map(|(i, _)| *i)
            .collect();
        for i in stale {
            self.sessions.remove(i);
        }
        self.sessions.insert(idx, PeerSession { transport, role, addr: from, confirmed: false });
        self.stats.handshakes += 1;
        tracing::debug!(%role, idx, "handshake completed, awaiting confirmation");
        vec![(from, encode_message(&response))]
    }

    fn on_data(&mut self, d: DataMessage, from: SocketAddr, now: Now) -> Vec<Outgoing> {
        let idx = d.receiver_index;
        let Some(ps) = self.sessions.get_mut(idx) else {
            self.audit(now, AuditKind::UnknownSession, Some(from), None, format!("index {idx:#010x}"));
            return Vec::new();
        };
        let role = ps.role;
        let payload = match ps.transport.recv(&d, now.instant) {
            Ok(p) => p,
            Err(e) => {
                let kind = match e {
                    TunnelError::AuthFailure => AuditKind::TransportAuthFailure,
                    TunnelError::ReplayRejected => AuditKind::Replay,
                    TunnelError::SessionExpired => AuditKind::SessionExpired,
                    _ => AuditKind::Malformed,
                };
                if e == TunnelError::SessionExpired {
                    self.remove_session(idx);
                }
                self.audit(now, kind, Some(from), Some(role), format!("counter {}", d.counter));
                return Vec::new();
            }
        };
        ps.addr = from;
        let mut out = Vec::new();
        if !ps.confirmed {
            ps.confirmed = true;
            self.stats.sessions_confirmed += 1;
            self.routes.insert(role, idx);
            tracing::info!(%role, idx, "session confirmed, route updated");
            out.extend(self.flush_role(role, now));
        }
        if payload.is_empty() {
            return out;
        }
        let frame = match Frame::decode(&payload) {
            Ok(f) => f,
            Err(e) => {
                self.audit(now, AuditKind::Malformed, Some(from), Some(role), e.to_string());
                return out;
            }
        };
        match frame {
            Frame::Ack { seq, status } => self.on_ack(role, seq, status),
            Frame::Envelope { seq, op } => {
                let status = self.on_envelope(role, seq, op, from, now);
                let ack = Frame::Ack { seq, status }.encode();
                out.extend(self.send_on(idx, &ack, now));
            }
        }
        out.extend(self.drain_sends(now));
        out
    }

    fn remove_session(&mut self, idx: u32) {
        if let Some(s) = self.sessions.remove(idx) {
            if self.routes.get(&s.role) == Some(&idx) {
                self.routes.remove(&s.role);
            }
        }
    }

    fn send_on(&mut self, idx: u32, payload: &[u8], now: Now) -> Option<Outgoing> {
        let ps = self.sessions.get_mut(idx)?;
        match ps.transport.send(payload, now.instant) {
            Ok(msg) => Some((ps.addr, encode_message(&Message::Data(msg)))),
            Err(e) => {
                tracing::debug!(idx, %e, "cannot send on session");
                None
            }
        }
    }

    fn on_envelope(&mut self, role: StakeholderRole, seq: u32, op: Op, from: SocketAddr, now: Now) -> AckStatus {
        let id = match &op {
            Op::Submit(i) | Op::Deliver(i) => i.id,
            Op::Report { intent_id, .. } => *intent_id,
        };
        let key = (role, id, seq);
        if let Some(s) = self.dedup.get(&key) {
            return s;
        }
        let status = match op {
            Op::Submit(intent) => self.on_submit(role, intent, now),
            Op::Report { intent_id, state, metrics } => self.on_report(role, intent_id, state, metrics, now),
            Op::Deliver(_) => Err((RecordError::Malformed, "peers cannot deliver intents")),
        };
        let status = match status {
            Ok(s) => {
                self.stats.envelopes_accepted += 1;
                s
            }
            Err((e, detail)) => {
                self.stats.envelopes_rejected += 1;
                let (kind, status) = match e {
                    RecordError::OwnerSpoof => (AuditKind::OwnerSpoof, AckStatus::OwnerSpoof),
                    RecordError::UnknownIntent => (AuditKind::UnknownIntent, AckStatus::UnknownIntent),
                    RecordError::UnauthorizedReporter => {
                        (AuditKind::UnauthorizedReporter, AckStatus::UnauthorizedReporter)
                    }
                    RecordError::IllegalTransition => (AuditKind::IllegalTransition, AckStatus::IllegalTransition),
                    RecordError::Malformed => (AuditKind::Malformed, AckStatus::Malformed),
                };
                self.audit(now, kind, Some(from), Some(role), format!("intent {id}: {detail}"));
                status
            }
        };
        self.dedup.insert(key, status);
        status
    }

    fn on_submit(
        &mut self,
        role: StakeholderRole,
        intent: ibn_core::intent::Intent,
        now: Now,
    ) -> Result<AckStatus, (RecordError, &'static str)> {
        let id = intent.id;
        let handler = intent.handler;
        match self.store.submit(intent, role, now.unix()) {
            Ok(Submitted::Duplicate) => Ok(AckStatus::Accepted),
            Ok(Submitted::New(entries)) => {
                self.record_log.extend(entries);
                if self.routes.contains_key(&handler) {
                    self.enqueue_delivery(handler, id, now);
                    Ok(AckStatus::Accepted)
                } else {
                    self.park(id, now);
                    Ok(AckStatus::Parked)
                }
            }
            Err(e) => Err((e, "submission rejected")),
        }
    }

    fn on_report(
        &mut self,
        role: StakeholderRole,
        id: IntentId,
        state: LifecycleState,
        metrics: Vec<(String, f64)>,
        now: Now,
    ) -> Result<AckStatus, (RecordError, &'static str)> {
        let entries = self
            .store
            .record_report(role, id, state, metrics, now.unix())
            .map_err(|e| (e, "report rejected"))?;
        self.record_log.extend(entries);
        Ok(AckStatus::Accepted)
    }

    fn on_ack(&mut self, role: StakeholderRole, seq: u32, status: AckStatus) {
        let Some(q) = self.outbound.get_mut(&role) else { return };
        let Some(p) = q.pending.remove(&seq) else { return };
        if status.is_success() {
            if let Some(e) = self.store.mark_delivered(p.intent) {
                self.record_log.push(e);
            }
        } else {
            tracing::warn!(%role, intent = %p.intent, ?status, "handler refused delivery");
        }
    }

    // ---- delivery ----

    fn park(&mut self, id: IntentId, now: Now) {
        if self.parked.contains(&id) {
            return;
        }
        if self.parked.len() >= self.settings.park_capacity.max(1) {
            if let Some(old) = self.parked.pop_front() {
                self.audit(now, AuditKind::ParkDropped, None, None, format!("intent {old} evicted from park"));
            }
        }
        self.parked.push_back(id);
    }

    fn enqueue_delivery(&mut self, role: StakeholderRole, id: IntentId, now: Now) {
        let Some(rec) = self.store.get(&id) else { return };
        let mut intent = rec.intent.clone();
        intent.state = LifecycleState::Received;
        let q = self.outbound.entry(role).or_default();
        if q.pending.values().any(|p| p.intent == id) {
            return;
        }
        let seq = q.next_seq;
        q.next_seq = q.next_seq.wrapping_add(1);
        let payload = Frame::Envelope { seq, op: Op::Deliver(intent) }.encode();
        q.pending.insert(seq, Pending { intent: id, payload, tries: 0, next_at: Some(now.instant) });
    }

    /// A session for `role` just became usable: move its parked intents into
    /// the delivery queue and restart every pending retransmission.
    fn flush_role(&mut self, role: StakeholderRole, now: Now) -> Vec<Outgoing> {
        let mine: Vec<IntentId> = self
            .parked
            .iter()
            .copied()
            .filter(|id| self.store.get(id).is_some_and(|r| r.intent.handler == role))
            .collect();
        self.parked.retain(|id| !mine.contains(id));
        for id in mine {
            self.enqueue_delivery(role, id, now);
        }
        if let Some(q) = self.outbound.get_mut(&role) {
            for p in q.pending.values_mut() {
                p.tries = 0;
                p.next_at = Some(now.instant);
            }
        }
        self.drain_sends(now)
    }

    /// Sends every due delivery whose handler has a confirmed route.
    fn drain_sends(&mut self, now: Now) -> Vec<Outgoing> {
        let mut out = Vec::new();
        let mut exhausted: Vec<(StakeholderRole, u32)> = Vec::new();
        let roles: Vec<StakeholderRole> = self.outbound.keys().copied().collect();
        for role in roles {
            let Some(&idx) = self.routes.get(&role) else { continue };
            let due: Vec<u32> = self.outbound[&role]
                .pending
                .iter()
                .filter(|(_, p)| p.next_at.is_some_and(|t| t <= now.instant))
                .map(|(s, _)| *s)
                .collect();
            for seq in due {
                let (payload, tries) = {
                    let p = &self.outbound[&role].pending[&seq];
                    (p.payload.clone(), p.tries)
                };
                if tries >= self.settings.retry.max_tries {
                    exhausted.push((role, seq));
                    continue;
                }
                if let Some(o) = self.send_on(idx, &payload, now) {
                    out.push(o);
                    self.stats.deliveries_sent += 1;
                }
                let retry = self.settings.retry;
                let p = self.outbound.get_mut(&role).unwrap().pending.get_mut(&seq).unwrap();
                p.tries += 1;
                p.next_at = Some(now.instant + retry.delay_after(p.tries));
            }
        }
        for (role, seq) in exhausted {
            if let Some(p) = self.outbound.get_mut(&role).and_then(|q| q.pending.remove(&seq)) {
                tracing::warn!(%role, intent = %p.intent, "delivery retry budget spent, parking");
                self.park(p.intent, now);
            }
        }
        out
    }

    /// Timer tick: retransmissions and session expiry.
    pub fn poll(&mut self, now: Now) -> Vec<Outgoing> {
        let expired: Vec<u32> = self
            .sessions
            .iter()
            .filter(|(_, s)| s.transport.is_expired(now.instant))
            .map(|(i, _)| *i)
            .collect();
        for idx in expired {
            self.remove_session(idx);
        }
        self.drain_sends(now)
    }

    /// The earliest instant at which [`poll`](Self::poll) has work to do.
    pub fn next_deadline(&self) -> Option<std::time::Instant> {
        let retx = self.outbound.values().flat_map(|q| q.pending.values()).filter_map(|p| p.next_at);
        let expiry = self
            .sessions
            .iter()
            .map(|(_, s)| s.transport.established_at() + s.transport.policy().reject_after_time);
        retx.chain(expiry).min()
    }

    /// Roles holding sessions, with session age, for status output.
    pub fn session_summary(&self, now: Now) -> Vec<(StakeholderRole, u32, bool, Duration)> {
        let mut v: Vec<_> = self
            .sessions
            .iter()
            .map(|(i, s)| (s.role, *i, s.confirmed, s.transport.age(now.instant)))
            .collect();
        v.sort_by_key(|(r, i, _, _)| (*r, *i));
        v
    }

    pub fn known_serials(&self) -> HashSet<u64> {
        self.registry.active().map(|c| c.serial).collect()
    }
}
