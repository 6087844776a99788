//! The peer side of the management plane.
//!
//! An agent always initiates toward the controller. It keeps an outbox of
//! envelopes awaiting acknowledgement, retransmits them with backoff across
//! session changes, and handles intents delivered to its role: CSP and NOP
//! translate and submit a child, VISP fulfils the terminal intent and reports
//! progress.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use ibn_core::crypto::{
    hs_finalize, hs_initiate, EphemeralKeypair, HandshakeState, PublicKey, StaticKeypair, Timestamp,
};
use ibn_core::intent::{
    new_intent, translate, Expectation, Intent, IntentId, IntentScope, LifecycleState, TranslationRule,
};
use ibn_core::pki::StakeholderRole;
use ibn_core::plane::{AckStatus, Frame, Op};
use ibn_core::tunnel::{
    decode_message, encode_message, Message, RekeyAction, RekeyPolicy, ReplayWindow, TransportSession,
    TunnelError,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{Now, RetryPolicy};

pub const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(1);
const HANDSHAKE_BACKOFF_CAP: Duration = Duration::from_secs(8);
/// Retransmission attempt after which the agent suspects its session.
const REHANDSHAKE_AT_TRY: u32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AgentError {
    #[error("only the consumer role submits intents, this agent is {0}")]
    NotConsumerRole(StakeholderRole),
    #[error(transparent)]
    Intent(#[from] ibn_core::intent::IntentError),
}

#[derive(Debug, Clone)]
pub struct AgentSettings {
    pub replay_window: usize,
    pub policy: RekeyPolicy,
    pub retry: RetryPolicy,
    /// VISP only: delay before reporting Deployed; Assured follows after the same delay again.
    pub fulfill_delay: Duration,
    pub rules: Vec<TranslationRule>,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            replay_window: ibn_core::tunnel::replay::DEFAULT_WINDOW,
            policy: RekeyPolicy::default(),
            retry: RetryPolicy::default(),
            fulfill_delay: Duration::from_millis(500),
            rules: ibn_core::intent::default_rules(),
        }
    }
}

/// Things the driver may want to log or act on.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentEvent {
    SessionEstablished { local_index: u32, rekey: bool },
    /// No response within the handshake timeout; the driver may check whether
    /// this agent's certificate is still good.
    HandshakeTimeout { attempts: u32 },
    Acked { intent: IntentId, seq: u32, status: AckStatus },
    Delivered { intent: IntentId, scope: IntentScope },
    /// Retry budget spent for an envelope. It is held until the next session.
    Timeout { intent: IntentId, seq: u32 },
    TranslationFailed { intent: IntentId, reason: String },
}

/// Persistent outbox journal, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OutboxLogEntry {
    Put { seq: u32, intent: String, frame: String },
    Ack { seq: u32 },
    /// A delivered intent that has been handled; redeliveries are only acked.
    Handled { intent: String },
}

impl OutboxLogEntry {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("outbox entries serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }
}

#[derive(Debug)]
struct OutboxItem {
    intent: IntentId,
    frame: Vec<u8>,
    tries: u32,
    next_at: Option<Instant>,
}

#[derive(Debug)]
struct InFlight {
    state: HandshakeState,
    sent_at: Instant,
    packet: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStatus {
    pub role: StakeholderRole,
    pub connected: bool,
    pub session_age_ms: Option<u128>,
    pub handshakes: u64,
    pub outbox: usize,
    pub handled: usize,
    pub submitted: Vec<String>,
}

pub struct Agent {
    role: StakeholderRole,
    static_key: StaticKeypair,
    controller: PublicKey,
    settings: AgentSettings,
    rng: ChaCha20Rng,
    current: Option<TransportSession>,
    previous: Option<TransportSession>,
    in_flight: Option<InFlight>,
    hs_attempts: u32,
    hs_next_at: Option<Instant>,
    last_timestamp: Option<Timestamp>,
    handshakes: u64,
    next_seq: u32,
    outbox: BTreeMap<u32, OutboxItem>,
    handled: HashSet<IntentId>,
    scheduled: Vec<(Instant, IntentId, LifecycleState, Vec<(String, f64)>)>,
    submitted: Vec<IntentId>,
    events: VecDeque<AgentEvent>,
    journal: Vec<OutboxLogEntry>,
}

impl Agent {
    pub fn new(
        role: StakeholderRole,
        static_key: StaticKeypair,
        controller: PublicKey,
        settings: AgentSettings,
        rng_seed: [u8; 32],
    ) -> Self {
        Self {
            role,
            static_key,
            controller,
            settings,
            rng: ChaCha20Rng::from_seed(rng_seed),
            current: None,
            previous: None,
            in_flight: None,
            hs_attempts: 0,
            hs_next_at: None,
            last_timestamp: None,
            handshakes: 0,
            next_seq: 0,
            outbox: BTreeMap::new(),
            handled: HashSet::new(),
            scheduled: Vec::new(),
            submitted: Vec::new(),
            events: VecDeque::new(),
            journal: Vec::new(),
        }
    }

    pub fn role(&self) -> StakeholderRole {
        self.role
    }

    pub fn static_public(&self) -> &PublicKey {
        self.static_key.public()
    }

    pub fn is_connected(&self) -> bool {
        self.current.is_some()
    }

    pub fn outbox_len(&self) -> usize {
        self.outbox.len()
    }

    pub fn take_events(&mut self) -> Vec<AgentEvent> {
        self.events.drain(..).collect()
    }

    pub fn take_journal(&mut self) -> Vec<OutboxLogEntry> {
        std::mem::take(&mut self.journal)
    }

    /// Replays a journal. Returns the compacted form, which callers may write
    /// back in place of the old file.
    pub fn restore(&mut self, entries: impl IntoIterator<Item = OutboxLogEntry>) -> Vec<OutboxLogEntry> {
        let mut max_seq = None::<u32>;
        for e in entries {
            match e {
                OutboxLogEntry::Put { seq, intent, frame } => {
                    max_seq = max_seq.max(Some(seq));
                    let (Ok(intent), Ok(frame)) = (intent.parse::<IntentId>(), hex::decode(&frame)) else {
                        continue;
                    };
                    self.outbox.insert(seq, OutboxItem { intent, frame, tries: 0, next_at: None });
                }
                OutboxLogEntry::Ack { seq } => {
                    max_seq = max_seq.max(Some(seq));
                    self.outbox.remove(&seq);
                }
                OutboxLogEntry::Handled { intent } => {
                    if let Ok(id) = intent.parse() {
                        self.handled.insert(id);
                    }
                }
            }
        }
        if let Some(s) = max_seq {
            self.next_seq = self.next_seq.max(s.wrapping_add(1));
        }
        let mut compact: Vec<OutboxLogEntry> =
            self.handled.iter().map(|id| OutboxLogEntry::Handled { intent: id.to_string() }).collect();
        compact.sort_by(|a, b| a.to_line().cmp(&b.to_line()));
        compact.extend(self.outbox.iter().map(|(seq, it)| OutboxLogEntry::Put {
            seq: *seq,
            intent: it.intent.to_string(),
            frame: hex::encode(&it.frame),
        }));
        // Keep the sequence high-water mark even when the outbox is empty.
        if let (Some(s), true) = (max_seq, self.outbox.is_empty()) {
            compact.push(OutboxLogEntry::Ack { seq: s });
        }
        compact
    }

    pub fn status(&self, now: Now) -> AgentStatus {
        AgentStatus {
            role: self.role,
            connected: self.current.is_some(),
            session_age_ms: self.current.as_ref().map(|s| s.age(now.instant).as_millis()),
            handshakes: self.handshakes,
            outbox: self.outbox.len(),
            handled: self.handled.len(),
            submitted: self.submitted.iter().map(|i| i.to_string()).collect(),
        }
    }

    fn next_timestamp(&mut self, now: Now) -> Timestamp {
        let mut ts = now.timestamp();
        if let Some(last) = self.last_timestamp {
            if ts <= last {
                let (s, n) = (last.secs(), last.nanos());
                ts = if n + 1 >= 1_000_000_000 { Timestamp::from_parts(s + 1, 0) } else { Timestamp::from_parts(s, n + 1) };
            }
        }
        self.last_timestamp = Some(ts);
        ts
    }

    /// Starts a handshake unless one is already outstanding.
    pub fn connect(&mut self, now: Now) -> Vec<Vec<u8>> {
        if self.in_flight.is_some() {
            return Vec::new();
        }
        self.start_handshake(now)
    }

    fn start_handshake(&mut self, now: Now) -> Vec<Vec<u8>> {
        let eph = EphemeralKeypair::random(&mut self.rng);
        let ts = self.next_timestamp(now);
        let idx = self.rng.next_u32();
        match hs_initiate(&self.static_key, &self.controller, eph, ts, idx) {
            Ok((state, msg)) => {
                let packet = encode_message(&Message::Initiation(msg));
                self.in_flight = Some(InFlight { state, sent_at: now.instant, packet: packet.clone() });
                self.hs_attempts += 1;
                let backoff = HANDSHAKE_TIMEOUT * 2u32.saturating_pow(self.hs_attempts.saturating_sub(1));
                self.hs_next_at = Some(now.instant + backoff.min(HANDSHAKE_BACKOFF_CAP));
                vec![packet]
            }
            Err(e) => {
                tracing::error!(%e, "cannot build initiation");
                Vec::new()
            }
        }
    }

    /// Creates a consumer intent and queues its submission.
    pub fn submit(&mut self, expectations: Vec<Expectation>, now: Now) -> Result<(IntentId, Vec<Vec<u8>>), AgentError> {
        if self.role != StakeholderRole::Csc {
            return Err(AgentError::NotConsumerRole(self.role));
        }
        let intent = new_intent(IntentScope::IntentCsc, self.role, expectations, now.unix(), &mut self.rng)?;
        let id = intent.id;
        self.submitted.push(id);
        self.enqueue(id, |seq| Frame::Envelope { seq, op: Op::Submit(intent) }, now);
        Ok((id, self.flush(now)))
    }

    fn enqueue(&mut self, intent: IntentId, build: impl FnOnce(u32) -> Frame, now: Now) {
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        let frame = build(seq).encode();
        self.journal.push(OutboxLogEntry::Put { seq, intent: intent.to_string(), frame: hex::encode(&frame) });
        self.outbox.insert(seq, OutboxItem { intent, frame, tries: 0, next_at: Some(now.instant) });
    }

    fn seal(&mut self, payload: &[u8], now: Now) -> Option<Vec<u8>> {
        let s = self.current.as_mut()?;
        match s.send(payload, now.instant) {
            Ok(m) => Some(encode_message(&Message::Data(m))),
            Err(TunnelError::RekeyRequired | TunnelError::SessionExpired) => None,
            Err(e) => {
                tracing::warn!(%e, "send failed");
                None
            }
        }
    }

    /// Sends due outbox items over the current session.
    fn flush(&mut self, now: Now) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        if self.current.is_none() {
            return out;
        }
        let retry = self.settings.retry;
        let due: Vec<u32> = self
            .outbox
            .iter()
            .filter(|(_, it)| it.next_at.is_some_and(|t| t <= now.instant))
            .map(|(s, _)| *s)
            .collect();
        let mut suspect = false;
        for seq in due {
            let (frame, tries, intent) = {
                let it = &self.outbox[&seq];
                (it.frame.clone(), it.tries, it.intent)
            };
            if tries >= retry.max_tries {
                self.outbox.get_mut(&seq).unwrap().next_at = None;
                self.events.push_back(AgentEvent::Timeout { intent, seq });
                continue;
            }
            let Some(pkt) = self.seal(&frame, now) else { break };
            out.push(pkt);
            let it = self.outbox.get_mut(&seq).unwrap();
            it.tries += 1;
            it.next_at = Some(now.instant + retry.delay_after(it.tries));
            if it.tries == REHANDSHAKE_AT_TRY {
                suspect = true;
            }
        }
        if suspect && self.in_flight.is_none() {
            tracing::debug!("retransmissions unanswered, re-handshaking");
            out.extend(self.start_handshake(now));
        }
        out
    }

    pub fn handle_datagram(&mut self, bytes: &[u8], now: Now) -> Vec<Vec<u8>> {
        match decode_message(bytes) {
            Ok(Message::Response(r)) => self.on_response(&r, now),
            Ok(Message::Data(d)) => self.on_data(&d, now),
            Ok(Message::Initiation(_)) => Vec::new(),
            Err(e) => {
                tracing::debug!(%e, "undecodable datagram");
                Vec::new()
            }
        }
    }

    fn on_response(&mut self, r: &ibn_core::crypto::ResponseMessage, now: Now) -> Vec<Vec<u8>> {
        let Some(fl) = self.in_flight.as_ref() else { return Vec::new() };
        if r.receiver_index != fl.state.local_index() {
            return Vec::new();
        }
        let fl = self.in_flight.take().unwrap();
        let done = match hs_finalize(fl.state, Some(r)) {
            Ok(d) => d,
            Err(e) => {
                tracing::warn!(%e, "handshake response rejected");
                return Vec::new();
            }
        };
        let window = ReplayWindow::new(self.settings.replay_window).unwrap_or_default();
        let session = TransportSession::from_handshake(done, r.sender_index, window, self.settings.policy, now.instant);
        let rekey = self.current.is_some();
        self.previous = self.current.replace(session);
        self.handshakes += 1;
        self.hs_attempts = 0;
        self.hs_next_at = None;
        let local_index = self.current.as_ref().unwrap().local_index();
        self.events.push_back(AgentEvent::SessionEstablished { local_index, rekey });
        for it in self.outbox.values_mut() {
            it.tries = 0;
            it.next_at = Some(now.instant);
        }
        // Key confirmation: the controller switches to this session on the
        // first data message it authenticates.
        let mut out: Vec<Vec<u8>> = self.seal(&[], now).into_iter().collect();
        out.extend(self.flush(now));
        out
    }

    fn on_data(&mut self, d: &ibn_core::tunnel::DataMessage, now: Now) -> Vec<Vec<u8>> {
        let session = [self.current.as_mut(), self.previous.as_mut()]
            .into_iter()
            .flatten()
            .find(|s| s.local_index() == d.receiver_index);
        let Some(session) = session else { return Vec::new() };
        let payload = match session.recv(d, now.instant) {
            Ok(p) => p,
            Err(e) => {
                tracing::debug!(%e, "data rejected");
                return Vec::new();
            }
        };
        if payload.is_empty() {
            return Vec::new();
        }
        let frame = match Frame::decode(&payload) {
            Ok(f) => f,
            Err(e) => {
                tracing::warn!(%e, "bad frame from controller");
                return Vec::new();
            }
        };
        let mut out = Vec::new();
        match frame {
            Frame::Ack { seq, status } => {
                if let Some(it) = self.outbox.remove(&seq) {
                    self.journal.push(OutboxLogEntry::Ack { seq });
                    self.events.push_back(AgentEvent::Acked { intent: it.intent, seq, status });
                }
            }
            Frame::Envelope { seq, op } => {
                let status = match op {
                    Op::Deliver(intent) => self.on_deliver(intent, now),
                    _ => AckStatus::Malformed,
                };
                out.extend(self.seal(&Frame::Ack { seq, status }.encode(), now));
            }
        }
        out.extend(self.flush(now));
        out
    }

    fn on_deliver(&mut self, mut intent: Intent, now: Now) -> AckStatus {
        if self.handled.contains(&intent.id) {
            return AckStatus::Accepted;
        }
        if intent.handler != self.role || intent.validate().is_err() {
            return AckStatus::Malformed;
        }
        let id = intent.id;
        self.events.push_back(AgentEvent::Delivered { intent: id, scope: intent.scope });
        if intent.scope.is_terminal() {
            let d = self.settings.fulfill_delay;
            let metrics = synthetic_metrics(&intent);
            self.scheduled.push((now.instant + d, id, LifecycleState::Deployed, Vec::new()));
            self.scheduled.push((now.instant + 2 * d, id, LifecycleState::Assured, metrics));
        } else {
            match translate(&mut intent, &self.settings.rules, now.unix(), &mut self.rng) {
                Ok(child) => {
                    let child_id = child.id;
                    self.enqueue(child_id, |seq| Frame::Envelope { seq, op: Op::Submit(child) }, now);
                    self.report(id, LifecycleState::Translated, Vec::new(), now);
                }
                Err(e) => {
                    self.events.push_back(AgentEvent::TranslationFailed { intent: id, reason: e.to_string() });
                    self.report(id, LifecycleState::Failed, Vec::new(), now);
                }
            }
        }
        self.handled.insert(id);
        self.journal.push(OutboxLogEntry::Handled { intent: id.to_string() });
        AckStatus::Accepted
    }

    fn report(&mut self, id: IntentId, state: LifecycleState, metrics: Vec<(String, f64)>, now: Now) {
        self.enqueue(id, |seq| Frame::Envelope { seq, op: Op::Report { intent_id: id, state, metrics } }, now);
    }

    /// Timer tick: handshake retries, rekeying, scheduled reports and
    /// retransmissions.
    pub fn poll(&mut self, now: Now) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        if let Some(fl) = &self.in_flight {
            if self.hs_next_at.is_some_and(|t| t <= now.instant) {
                tracing::debug!(since = ?now.instant - fl.sent_at, "handshake timed out");
                self.in_flight = None;
                self.events.push_back(AgentEvent::HandshakeTimeout { attempts: self.hs_attempts });
                out.extend(self.start_handshake(now));
            }
        } else if self.current.is_none() {
            out.extend(self.start_handshake(now));
        }
        if let Some(s) = &self.current {
            if s.is_expired(now.instant) {
                self.current = None;
                if self.in_flight.is_none() {
                    out.extend(self.start_handshake(now));
                }
            } else if s.maybe_rekey(now.instant) == RekeyAction::InitiateNewHandshake && self.in_flight.is_none() {
                out.extend(self.start_handshake(now));
            }
        }
        if self.previous.as_ref().is_some_and(|p| p.is_expired(now.instant)) {
            self.previous = None;
        }
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.scheduled).into_iter().partition(|s| s.0 <= now.instant);
        self.scheduled = later;
        for (_, id, state, metrics) in due {
            self.report(id, state, metrics, now);
        }
        out.extend(self.flush(now));
        out
    }

    /// The earliest instant at which [`poll`](Self::poll) has work to do.
    pub fn next_deadline(&self) -> Option<Instant> {
        let s = self.current.as_ref();
        [
            self.hs_next_at,
            s.map(|s| s.established_at() + s.policy().rekey_after_time),
            self.outbox.values().filter_map(|i| i.next_at).min(),
            self.scheduled.iter().map(|s| s.0).min(),
        ]
        .into_iter()
        .flatten()
        .min()
    }

    /// Bytes of the last initiation, for drivers that want to resend as-is.
    pub fn pending_initiation(&self) -> Option<&[u8]> {
        self.in_flight.as_ref().map(|f| f.packet.as_slice())
    }
}

/// Measured values reported with Assured: each numeric target is met exactly.
fn synthetic_metrics(intent: &Intent) -> Vec<(String, f64)> {
    intent
        .expectations
        .iter()
        .filter_map(|e| e.target.as_ref().map(|t| (e.key.clone(), t.value)))
        .collect()
}
