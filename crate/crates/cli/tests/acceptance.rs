//! Acceptance run: every criterion at its stated tolerance, one PASS/FAIL
//! line each. Runs under `cargo test` with its own harness.

#[path = "../../core/tests/oracle/mod.rs"]
mod oracle;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::net::SocketAddr;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use ibn_bench::{emit, median, run_series, BenchConfig, Kind, Mode, CSV_HEADER, REPORT_FILE};
use ibn_core::crypto::{
    dh, generate_keypair, hash, hs_finalize, hs_initiate, hs_respond, seal_with_nonce, EphemeralKeypair, HandshakeRole,
    PublicKey, StaticKeypair, Timestamp, PROLOGUE, PROTOCOL_NAME,
};
use ibn_core::intent::{decode_intent, transition, IntentId, IntentScope, LifecycleEvent, LifecycleState};
use ibn_core::pki::{enrollment_token, EnrollmentRequest, StakeholderRole as Role};
use ibn_core::tunnel::replay::DEFAULT_WINDOW;
use ibn_core::tunnel::{
    decode_message, encode_message, DataMessage, Message, RekeyPolicy, ReplayWindow, TransportSession, TunnelError,
};
use ibn_node::agent::{AgentEvent, AgentSettings};
use ibn_node::api::IntentView;
use ibn_node::controller::ControllerSettings;
use ibn_node::records::{GlobalIntentRecord, RecordLogEntry};
use ibn_node::sim::{agent_addr, Sim};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure!(t < limit, "took {t:.2?}, limit {limit:?}");
    Ok(t)
}

fn h32(s: &str) -> [u8; 32] {
    hex::decode(s).unwrap().try_into().unwrap()
}

fn primitives() -> Outcome {
    let start = Instant::now();
    let alice_priv = "77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a";
    let bob_priv = "5dab087e624a8a4b79e17f8b83800ee66f3bb1292618b6fd1c2f8b27ff88e0eb";
    let alice_pub = "8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a";
    let bob_pub = "de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f";
    let shared = "4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742";
    let a = generate_keypair(h32(alice_priv));
    let b = generate_keypair(h32(bob_priv));
    ensure!(a.public.to_hex() == alice_pub && b.public.to_hex() == bob_pub, "x25519 public keys differ");
    ensure!(hex::encode(dh(&a.private, &b.public).unwrap().as_bytes()) == shared, "x25519 shared secret differs");
    ensure!(hex::encode(dh(&b.private, &a.public).unwrap().as_bytes()) == shared, "x25519 shared secret not symmetric");
    ensure!(hex::encode(oracle::x25519(&h32(alice_priv), &h32(bob_pub))) == shared, "oracle x25519 differs");

    let abc = "508c5e8c327c14e2e1a72ba34eeb452f37458b209ed63a294d999b4c86675982";
    ensure!(hex::encode(hash(b"abc")) == abc, "blake2s(\"abc\") differs");
    ensure!(hex::encode(oracle::blake2s(b"abc")) == abc, "oracle blake2s differs");

    let key: [u8; 32] = std::array::from_fn(|i| 0x80 + i as u8);
    let nonce: [u8; 12] = hex::decode("070000004041424344454647").unwrap().try_into().unwrap();
    let aad = hex::decode("50515253c0c1c2c3c4c5c6c7").unwrap();
    let pt = b"Ladies and Gentlemen of the class of '99: If I could offer you only one tip for the future, sunscreen would be it.";
    let expect = "d31a8d34648e60db7b86afbc53ef7ec2a4aded51296e08fea9e2b5a736ee62d63dbea45e8ca9671282fafb69da92728b1a71de0a9e060b2905d6a5b67ecd3b3692ddbd7f2d778b8c9803aee328091b58fab324e4fad675945585808b4831d7bc3ff4def08e4b7a9de576d26586cec64b61161ae10b594f09e26a7e902ecbd0600691";
    ensure!(hex::encode(seal_with_nonce(&key, &nonce, pt, &aad)) == expect, "chacha20-poly1305 differs");
    ensure!(hex::encode(oracle::aead_seal(&key, &nonce, pt, &aad)) == expect, "oracle aead differs");
    let t = within(start, Duration::from_secs(5))?;
    Ok(format!("x25519, blake2s and chacha20-poly1305 vectors exact in {t:.2?}"))
}

fn handshake_transcript() -> Outcome {
    let start = Instant::now();
    let (s_i, e_i, s_r, e_r) = ([0x01; 32], [0x02; 32], [0x03; 32], [0x04; 32]);
    let ts = Timestamp::from_parts(1_700_000_000, 123_456_789);
    let (idx_i, idx_r) = (0x1122_3344, 0x5566_7788);
    let expect = oracle::noise_ik(PROTOCOL_NAME, PROLOGUE, &s_i, &e_i, &s_r, &e_r, &ts.0, idx_i, idx_r);

    let si = StaticKeypair::from_entropy(s_i);
    let sr = StaticKeypair::from_entropy(s_r);
    let (ist, init) = hs_initiate(&si, sr.public(), EphemeralKeypair::from_entropy(e_i), ts, idx_i).unwrap();
    ensure!(encode_message(&Message::Initiation(init.clone())) == expect.initiation, "initiation bytes differ");
    let pi = *si.public();
    let gate = move |k: &PublicKey| *k == pi;
    let r = hs_respond(&sr, &gate, &init, EphemeralKeypair::from_entropy(e_r), idx_r).unwrap();
    ensure!(encode_message(&Message::Response(r.response.clone())) == expect.response, "response bytes differ");
    let i = hs_finalize(ist, Some(&r.response)).unwrap();
    let rr = hs_finalize(r.state, None).unwrap();
    ensure!(i.role == HandshakeRole::Initiator, "initiator role");
    ensure!(i.keys.send == rr.keys.recv && i.keys.recv == rr.keys.send, "session keys are not mirrored");
    ensure!(i.keys.send == expect.initiator_to_responder, "initiator send key differs from script");
    ensure!(i.keys.recv == expect.responder_to_initiator, "initiator recv key differs from script");
    ensure!(i.transcript_hash == rr.transcript_hash && i.transcript_hash == expect.transcript_hash, "transcript hash");
    let t = within(start, Duration::from_secs(1))?;
    Ok(format!("116+60 byte transcript and keys match the script in {t:.2?}"))
}

fn one_rtt() -> Outcome {
    let trials = 50;
    for seed in 0..trials {
        let mut s = Sim::new(seed, ControllerSettings::default(), AgentSettings::default());
        let now = s.now;
        let from = agent_addr(Role::Csc);
        let mut to_ctl: VecDeque<Vec<u8>> = s.agent(Role::Csc).connect(now).into();
        let mut to_agent: VecDeque<Vec<u8>> = VecDeque::new();
        let mut handshake_datagrams = 0;
        let mut first_data_after = None;
        while first_data_after.is_none() {
            if let Some(d) = to_ctl.pop_front() {
                let ty = d[0];
                if ty == 1 || ty == 2 {
                    handshake_datagrams += 1;
                }
                let out = s.controller.handle_datagram(&d, from, now);
                if ty == 4 && s.controller.confirmed_session_count() == 1 {
                    first_data_after = Some(handshake_datagrams);
                }
                to_agent.extend(out.into_iter().map(|(_, b)| b));
            } else if let Some(d) = to_agent.pop_front() {
                if matches!(d[0], 1 | 2) {
                    handshake_datagrams += 1;
                }
                to_ctl.extend(s.agent(Role::Csc).handle_datagram(&d, now));
            } else {
                return Err(format!("seed {seed}: exchange stalled after {handshake_datagrams} handshake datagrams"));
            }
        }
        ensure!(first_data_after == Some(2), "seed {seed}: {first_data_after:?} handshake datagrams before first transport");
        ensure!(s.controller.take_audit().is_empty(), "seed {seed}: audit events on a clean handshake");
    }
    Ok(format!("exactly 2 handshake datagrams before the first decrypted transport datagram in {trials}/{trials} trials"))
}

fn access_control() -> Outcome {
    let start = Instant::now();
    let mut s = Sim::new(404, ControllerSettings::default(), AgentSettings::default());
    let mut rng = ChaCha20Rng::seed_from_u64(0xacce55);
    let ctl = *s.controller.static_public();
    let src: SocketAddr = "192.0.2.66:4444".parse().unwrap();
    let now = s.now;

    // Keys whose certificates were issued and then revoked.
    let mut revoked = Vec::new();
    for _ in 0..32 {
        let key = StaticKeypair::random(&mut rng);
        let req = EnrollmentRequest::new(Role::Visp, *key.public(), now.unix(), &enrollment_token(&s.master, Role::Visp));
        let cert = s.controller.enroll(&req, now, None).unwrap();
        s.controller.revoke(cert.serial, now).unwrap();
        revoked.push(key);
    }
    // A legitimate peer whose captured traffic the adversary replays and mutates.
    let legit = StaticKeypair::random(&mut rng);
    let req = EnrollmentRequest::new(Role::Nop, *legit.public(), now.unix(), &enrollment_token(&s.master, Role::Nop));
    s.controller.enroll(&req, now, None).unwrap();
    s.controller.take_audit();

    let mut clock = 1_900_000_000u64;
    let mut fresh_ts = || {
        clock += 1;
        Timestamp::from_parts(clock, 0)
    };
    let initiation = |key: &StaticKeypair, ts: Timestamp, rng: &mut ChaCha20Rng| {
        let (_, m) = hs_initiate(key, &ctl, EphemeralKeypair::random(rng), ts, rng.gen()).unwrap();
        encode_message(&Message::Initiation(m))
    };
    let legit_before = s.controller.stats().handshakes;
    let mut legit_handshakes = 0;
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    let attempts = 10_000;
    for n in 0..attempts {
        let attack = match n % 4 {
            0 => initiation(&StaticKeypair::random(&mut rng), fresh_ts(), &mut rng),
            1 => {
                let key = &revoked[rng.gen_range(0..revoked.len())];
                initiation(key, fresh_ts(), &mut rng)
            }
            2 => {
                let original = initiation(&legit, fresh_ts(), &mut rng);
                let replies = s.controller.handle_datagram(&original, src, now);
                ensure!(replies.len() == 1, "legitimate initiation not answered");
                legit_handshakes += 1;
                let mut flipped = original;
                let bit = rng.gen_range(0..flipped.len() * 8);
                flipped[bit / 8] ^= 1 << (bit % 8);
                flipped
            }
            _ => {
                let ts = fresh_ts();
                let original = initiation(&legit, ts, &mut rng);
                let replies = s.controller.handle_datagram(&original, src, now);
                ensure!(replies.len() == 1, "legitimate initiation not answered");
                legit_handshakes += 1;
                if rng.gen_bool(0.5) {
                    original
                } else {
                    let older = Timestamp::from_parts(ts.secs() - rng.gen_range(1..1_000_000), 0);
                    initiation(&legit, older, &mut rng)
                }
            }
        };
        let audit_before = s.controller.take_audit().len();
        ensure!(audit_before == 0, "attempt {n}: stray audit events before the attempt");
        let replies = s.controller.handle_datagram(&attack, src, now);
        ensure!(replies.is_empty(), "attempt {n} (kind {}) was answered with a handshake response", n % 4);
        let audit = s.controller.take_audit();
        ensure!(!audit.is_empty(), "attempt {n} (kind {}) left no audit record", n % 4);
        for e in audit {
            *kinds.entry(format!("{:?}", e.kind)).or_default() += 1;
        }
    }
    let stats = s.controller.stats();
    ensure!(stats.handshakes - legit_before == legit_handshakes, "an adversarial handshake completed");
    ensure!(stats.sessions_confirmed == 0 && stats.envelopes_accepted == 0, "sessions or envelopes from attempts");
    ensure!(s.controller.store().is_empty(), "an envelope was routed");
    let t = within(start, Duration::from_secs(60))?;
    Ok(format!("{attempts} attempts: 0 sessions, 0 envelopes, every attempt audited {kinds:?} in {t:.2?}"))
}

fn transport_integrity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    let si = StaticKeypair::random(&mut rng);
    let sr = StaticKeypair::random(&mut rng);
    let pi = *si.public();
    let (st, init) = hs_initiate(&si, sr.public(), EphemeralKeypair::random(&mut rng), Timestamp::from_parts(1, 0), 1).unwrap();
    let gate = move |k: &PublicKey| *k == pi;
    let r = hs_respond(&sr, &gate, &init, EphemeralKeypair::random(&mut rng), 2).unwrap();
    let t0 = Instant::now();
    let win = || ReplayWindow::new(DEFAULT_WINDOW).unwrap();
    let mut tx = TransportSession::from_handshake(hs_finalize(st, Some(&r.response)).unwrap(), 2, win(), RekeyPolicy::default(), t0);
    let mut rx = TransportSession::from_handshake(hs_finalize(r.state, None).unwrap(), 1, win(), RekeyPolicy::default(), t0);

    #[derive(Clone, Copy, PartialEq, Debug)]
    enum Kind {
        Legit,
        Duplicate,
        Corrupt,
    }
    let legit = 8_000usize;
    let extra = 1_000usize;
    let sealed: Vec<(Vec<u8>, DataMessage)> = (0..legit)
        .map(|i| {
            let mut p = vec![0u8; 1 + (i % 200)];
            rng.fill_bytes(&mut p);
            let m = tx.send(&p, t0).unwrap();
            (p, m)
        })
        .collect();

    // Reorder within blocks narrower than the replay window.
    let block = DEFAULT_WINDOW / 2;
    let mut order: Vec<usize> = (0..legit).collect();
    for chunk in order.chunks_mut(block) {
        for i in (1..chunk.len()).rev() {
            chunk.swap(i, rng.gen_range(0..=i));
        }
    }
    let mut stream: Vec<(Kind, usize, DataMessage)> = order.iter().map(|&i| (Kind::Legit, i, sealed[i].1.clone())).collect();
    // Corrupted copies arrive just before their original, while the counter is fresh.
    let mut corrupt_at: Vec<usize> = (0..extra).map(|_| rng.gen_range(0..legit)).collect();
    corrupt_at.sort_unstable();
    corrupt_at.dedup();
    while corrupt_at.len() < extra {
        let p = rng.gen_range(0..legit);
        if let Err(i) = corrupt_at.binary_search(&p) {
            corrupt_at.insert(i, p);
        }
    }
    for &pos in corrupt_at.iter().rev() {
        let (_, i, m) = stream[pos].clone();
        let mut bad = m;
        let bit = rng.gen_range(0..bad.ciphertext.len() * 8);
        bad.ciphertext[bit / 8] ^= 1 << (bit % 8);
        stream.insert(pos, (Kind::Corrupt, i, bad));
    }
    // Duplicates of already-delivered packets, anywhere later in the stream.
    for _ in 0..extra {
        let len = stream.len();
        let pos = rng.gen_range(0..len);
        let (kind, i, m) = stream[pos].clone();
        let (i, m) = if kind == Kind::Legit { (i, m) } else { (i, sealed[i].1.clone()) };
        let original = stream.iter().position(|(k, j, _)| *k == Kind::Legit && *j == i).unwrap();
        let at = rng.gen_range(original + 1..=len);
        stream.insert(at, (Kind::Duplicate, i, m));
    }
    ensure!(stream.len() == legit + 2 * extra, "schedule has {} datagrams", stream.len());

    let mut accepted = vec![0u32; legit];
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (n, (kind, i, m)) in stream.iter().enumerate() {
        let wire = encode_message(&Message::Data(m.clone()));
        let Ok(Message::Data(d)) = decode_message(&wire) else { return Err(format!("datagram {n} does not decode")) };
        let got = rx.recv(&d, t0);
        match (kind, got) {
            (Kind::Legit, Ok(p)) => {
                ensure!(p == sealed[*i].0, "datagram {n}: payload mismatch");
                accepted[*i] += 1;
            }
            (Kind::Corrupt, Err(TunnelError::AuthFailure)) => *counts.entry("auth_failure").or_default() += 1,
            (Kind::Duplicate, Err(TunnelError::ReplayRejected)) => *counts.entry("replay_rejected").or_default() += 1,
            (k, other) => return Err(format!("datagram {n} ({k:?} of #{i}): {other:?}")),
        }
    }
    ensure!(accepted.iter().all(|&c| c == 1), "some packet not accepted exactly once");
    let t = within(start, Duration::from_secs(30))?;
    Ok(format!(
        "{} datagrams: {legit} accepted once, {} corrupt -> AuthFailure, {} duplicate -> ReplayRejected in {t:.2?}",
        stream.len(),
        counts.get("auth_failure").copied().unwrap_or(0),
        counts.get("replay_rejected").copied().unwrap_or(0)
    ))
}

fn history_is_consistent(r: &GlobalIntentRecord) -> Result<(), String> {
    let table = oracle::lifecycle::oracle_table();
    let states: Vec<LifecycleState> = r.history.iter().map(|h| h.state).collect();
    ensure!(states.first() == Some(&LifecycleState::Received), "{} history starts at {:?}", r.intent.scope, states.first());
    for w in states.windows(2) {
        let ok = table.iter().any(|((s, e), to)| *s == w[0] && *to == Some(w[1]) && *e != LifecycleEvent::Fail);
        ensure!(ok, "{}: no edge {:?} -> {:?}", r.intent.scope, w[0], w[1]);
    }
    Ok(())
}

fn demo_lifecycle() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_ibnmp"))
        .args(["demo", "up", "--json", "--workdir"])
        .arg(dir.path().join("demo"))
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(out.status.success(), "demo exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    ensure!(elapsed < Duration::from_secs(10), "demo took {elapsed:.2?}");
    let view: IntentView = serde_json::from_slice(&out.stdout).map_err(|e| format!("bad JSON: {e}"))?;
    let root = &view.record;
    ensure!(root.intent.scope == IntentScope::IntentCsc && root.intent.parent_id.is_none(), "root is not a CSC intent");
    let csp = view.descendants.iter().find(|d| d.intent.parent_id == Some(root.intent.id)).ok_or("no CSP child")?;
    let nop = view.descendants.iter().find(|d| d.intent.parent_id == Some(csp.intent.id)).ok_or("no NOP grandchild")?;
    ensure!(view.descendants.len() == 2, "{} descendants", view.descendants.len());
    ensure!(csp.intent.scope == IntentScope::IntentCsp && nop.intent.scope == IntentScope::IntentNop, "scopes");
    for r in [root, csp, nop] {
        ensure!(r.state() == LifecycleState::Assured, "{} ended {}", r.intent.scope, r.state());
        history_is_consistent(r)?;
    }
    Ok(format!("CSC -> CSP -> NOP lineage Assured with valid histories in {elapsed:.2?}"))
}

fn rekey_continuity() -> Outcome {
    let policy = RekeyPolicy::with_rekey_after(Duration::from_secs(2));
    let cs = ControllerSettings { policy, ..Default::default() };
    let asettings = AgentSettings { policy, fulfill_delay: Duration::from_millis(100), ..Default::default() };
    let mut s = Sim::new(77, cs, asettings);
    s.connect_all();
    let step = Duration::from_millis(50);
    let mut submitted: Vec<IntentId> = Vec::new();
    let mut elapsed = Duration::ZERO;
    while elapsed < Duration::from_secs(10) {
        if elapsed.as_millis() % 250 == 0 {
            let now = s.now;
            let (id, out) = s.agent(Role::Csc).submit(vec![ibn_core::intent::Expectation::new("service", "remote-industrial-control"), ibn_core::intent::Expectation::new("area", "A")], now).map_err(|e| e.to_string())?;
            s.send_from_agent(Role::Csc, out);
            submitted.push(id);
        }
        s.run_for(step, step);
        elapsed += step;
    }
    let rekeys: BTreeMap<Role, usize> = Role::PEERS
        .into_iter()
        .map(|r| {
            let n = s.events.iter().filter(|(x, e)| *x == r && matches!(e, AgentEvent::SessionEstablished { rekey: true, .. })).count();
            (r, n)
        })
        .collect();
    s.run_for(Duration::from_secs(5), step);

    let mut created: HashMap<IntentId, usize> = HashMap::new();
    for e in s.controller.take_record_log() {
        if let RecordLogEntry::Created { intent, .. } = e {
            let i = decode_intent(&hex::decode(intent).unwrap()).unwrap();
            *created.entry(i.id).or_default() += 1;
        }
    }
    let mut delivered: HashMap<IntentId, usize> = HashMap::new();
    for (_, e) in &s.events {
        if let AgentEvent::Delivered { intent, .. } = e {
            *delivered.entry(*intent).or_default() += 1;
        }
    }
    let store = s.controller.store();
    let min_rekeys = rekeys.values().copied().min().unwrap_or(0);
    ensure!(min_rekeys >= 4, "only {min_rekeys} rekeys in 10 s: {rekeys:?}");
    ensure!(submitted.len() == 40, "{} intents submitted", submitted.len());
    ensure!(store.len() == 3 * submitted.len(), "{} records for {} roots", store.len(), submitted.len());
    ensure!(created.len() == store.len() && created.values().all(|&c| c == 1), "an intent was applied more than once");
    ensure!(delivered.len() == store.len() && delivered.values().all(|&c| c == 1), "a handler applied an intent twice");
    for id in &submitted {
        let r = store.get(id).ok_or("lost intent")?;
        ensure!(r.state() == LifecycleState::Assured, "intent {id} ended {}", r.state());
    }
    let seen: HashSet<IntentId> = submitted.iter().copied().collect();
    ensure!(seen.len() == submitted.len(), "duplicate intent ids");
    Ok(format!("{} intents over 10 s across {rekeys:?} rekeys; 0 lost, 0 duplicated", submitted.len()))
}

fn overhead_exactness() -> Outcome {
    let mut parts = Vec::new();
    for payload in [1usize, 64, 512, 1400] {
        let cfg = BenchConfig { mode: Mode::Tunnel, payload_bytes: payload, duration: Duration::from_millis(200), ..Default::default() };
        let r = ibn_bench::run_throughput(&cfg).map_err(|e| e.to_string())?;
        ensure!(r.packets_sent > 0, "{payload} B: nothing sent");
        ensure!(r.overhead_per_packet() == 32.0, "{payload} B: overhead {}", r.overhead_per_packet());
        ensure!(r.wire_bytes_sent == r.packets_sent * (payload as u64 + 32), "{payload} B: wire bytes");
        parts.push(format!("{payload}B->{}", payload + 32));
    }
    Ok(format!("32 bytes per packet at every size ({})", parts.join(", ")))
}

fn mode_ordering() -> Outcome {
    let runs = 5;
    let dir = tempfile::tempdir().unwrap();
    let mut all = Vec::new();
    let mut goodput = BTreeMap::new();
    let mut rtt = BTreeMap::new();
    for mode in [Mode::Plaintext, Mode::Tunnel] {
        let cfg = BenchConfig { mode, duration: Duration::from_millis(500), rtt_count: 200, ..Default::default() };
        let t = run_series(&cfg, Kind::Throughput, runs).map_err(|e| e.to_string())?;
        let r = run_series(&cfg, Kind::Rtt, runs).map_err(|e| e.to_string())?;
        goodput.insert(mode, median(&t.iter().map(|x| x.throughput_mbps).collect::<Vec<_>>()).unwrap());
        let samples: Vec<f64> = r.iter().flat_map(|x| x.rtt_samples.iter().map(|s| s.1)).collect();
        rtt.insert(mode, median(&samples).unwrap());
        all.extend(t);
        all.extend(r);
    }
    let (gp, gt) = (goodput[&Mode::Plaintext], goodput[&Mode::Tunnel]);
    let (rp, rt) = (rtt[&Mode::Plaintext], rtt[&Mode::Tunnel]);
    ensure!(gp >= gt, "median goodput plaintext {gp:.1} < tunnel {gt:.1} Mbit/s");
    ensure!(rt >= rp, "median rtt tunnel {rt:.4} < plaintext {rp:.4} ms");

    emit(&all, dir.path()).map_err(|e| e.to_string())?;
    let csv = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
    let mut lines = csv.lines();
    ensure!(lines.next() == Some(CSV_HEADER), "csv header");
    let mut rows = 0;
    for l in lines {
        let c: Vec<&str> = l.split(',').collect();
        ensure!(c.len() == 4, "row {l}");
        ensure!(c[0] == "tunnel" || c[0] == "plaintext", "mode in {l}");
        ensure!(!c[1].is_empty() && c[2].parse::<u64>().is_ok() && c[3].parse::<f64>().is_ok(), "row {l}");
        rows += 1;
    }
    Ok(format!(
        "{runs} runs: goodput plaintext {gp:.1} >= tunnel {gt:.1} Mbit/s; rtt tunnel {:.1} >= plaintext {:.1} us; {rows} csv rows",
        rt * 1e3,
        rp * 1e3
    ))
}

fn state_machine() -> Outcome {
    let table = oracle::lifecycle::oracle_table();
    ensure!(table.len() == LifecycleState::ALL.len() * LifecycleEvent::ALL.len(), "table size {}", table.len());
    let mut edges = 0;
    for ((s, e), expect) in &table {
        ensure!(transition(*s, *e).ok() == *expect, "({s:?}, {e:?})");
        edges += expect.is_some() as usize;
    }
    Ok(format!("all {} (state, event) pairs match the edge list ({edges} edges)", table.len()))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: [(u8, &str, fn() -> Outcome); 10] = [
        (1, "primitive conformance", primitives),
        (2, "noise ik transcript", handshake_transcript),
        (3, "1-rtt handshake", one_rtt),
        (4, "access control", access_control),
        (5, "transport integrity", transport_integrity),
        (6, "e2e lifecycle", demo_lifecycle),
        (7, "rekey continuity", rekey_continuity),
        (8, "overhead exactness", overhead_exactness),
        (9, "throughput and rtt ordering", mode_ordering),
        (10, "state machine exhaustiveness", state_machine),
    ];
    let filter: Vec<&String> = args.iter().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str()) || *p == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match res {
            Ok(msg) => println!("PASS {n:>2} {name}: {msg} [{:.2?}]", start.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {msg} [{:.2?}]", start.elapsed());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
