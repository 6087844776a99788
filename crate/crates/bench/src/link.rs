use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use ibn_core::crypto::{
    hs_finalize, hs_initiate, hs_respond, EphemeralKeypair, PublicKey, StaticKeypair, Timestamp,
};
use ibn_core::tunnel::replay::DEFAULT_WINDOW;
use ibn_core::tunnel::{
    decode_message, encode_message, seal_batch, Message, RekeyPolicy, ReplayWindow, TransportSession,
};
use rand::{rngs::OsRng, RngCore};

use crate::{BenchConfig, BenchError, BenchReport, Kind, Mode, ResourceSample, RttStats, Sampler};

const SEND_BATCH: usize = 32;
const POLL: Duration = Duration::from_millis(20);
const DRAIN: Duration = Duration::from_millis(50);
const HANDSHAKE_TRIES: u32 = 3;

#[derive(Default)]
struct Counters {
    received: AtomicU64,
    rejected: AtomicU64,
    bytes: AtomicU64,
}

struct Responder {
    addr: SocketAddr,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

impl Responder {
    fn finish(self) -> Arc<Counters> {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.thread.join();
        self.counters
    }
}

struct TunnelKeys {
    server: StaticKeypair,
    client: StaticKeypair,
}

impl TunnelKeys {
    fn random() -> Self {
        Self { server: StaticKeypair::random(&mut OsRng), client: StaticKeypair::random(&mut OsRng) }
    }
}

fn loopback() -> std::io::Result<UdpSocket> {
    UdpSocket::bind("127.0.0.1:0")
}

/// Receives, optionally echoes, and counts. In tunnel mode it answers
/// handshakes from `client` and keeps the most recent session.
fn spawn_responder(mode: Mode, echo: bool, server: Option<StaticKeypair>, client: Option<PublicKey>) -> std::io::Result<Responder> {
    let sock = loopback()?;
    sock.set_read_timeout(Some(POLL))?;
    let addr = sock.local_addr()?;
    let counters = Arc::new(Counters::default());
    let stop = Arc::new(AtomicBool::new(false));
    let (c, s) = (counters.clone(), stop.clone());
    let thread = std::thread::spawn(move || {
        let mut buf = vec![0u8; 65536];
        let mut session: Option<TransportSession> = None;
        while !s.load(Ordering::Relaxed) {
            let (n, from) = match sock.recv_from(&mut buf) {
                Ok(x) => x,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
                Err(_) => continue,
            };
            match mode {
                Mode::Plaintext => {
                    c.received.fetch_add(1, Ordering::Relaxed);
                    c.bytes.fetch_add(n as u64, Ordering::Relaxed);
                    if echo {
                        let _ = sock.send_to(&buf[..n], from);
                    }
                }
                Mode::Tunnel => match decode_message(&buf[..n]) {
                    Ok(Message::Initiation(m)) => {
                        let (Some(key), Some(peer)) = (server.as_ref(), client) else { continue };
                        let gate = move |k: &PublicKey| *k == peer;
                        let eph = EphemeralKeypair::random(&mut OsRng);
                        let Ok(r) = hs_respond(key, &gate, &m, eph, OsRng.next_u32()) else { continue };
                        let resp = encode_message(&Message::Response(r.response));
                        let Ok(done) = hs_finalize(r.state, None) else { continue };
                        session = Some(TransportSession::from_handshake(
                            done,
                            m.sender_index,
                            ReplayWindow::new(DEFAULT_WINDOW).expect("default window"),
                            RekeyPolicy::default(),
                            Instant::now(),
                        ));
                        let _ = sock.send_to(&resp, from);
                    }
                    Ok(Message::Data(d)) => {
                        let Some(sess) = session.as_mut() else {
                            c.rejected.fetch_add(1, Ordering::Relaxed);
                            continue;
                        };
                        match sess.recv(&d, Instant::now()) {
                            Ok(p) => {
                                c.received.fetch_add(1, Ordering::Relaxed);
                                c.bytes.fetch_add(p.len() as u64, Ordering::Relaxed);
                                if echo {
                                    if let Ok(m) = sess.send(&p, Instant::now()) {
                                        let _ = sock.send_to(&encode_message(&Message::Data(m)), from);
                                    }
                                }
                            }
                            Err(_) => {
                                c.rejected.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                    }
                    _ => {
                        c.rejected.fetch_add(1, Ordering::Relaxed);
                    }
                },
            }
        }
    });
    Ok(Responder { addr, counters, stop, thread })
}

/// One side of a measurement: a connected socket plus, in tunnel mode, an
/// established session.
struct Sender {
    sock: UdpSocket,
    session: Option<TransportSession>,
}

impl Sender {
    fn connect(peer: SocketAddr, keys: Option<&TunnelKeys>, timeout: Duration) -> Result<Self, BenchError> {
        let sock = loopback()?;
        sock.connect(peer)?;
        let Some(keys) = keys else { return Ok(Self { sock, session: None }) };
        sock.set_read_timeout(Some(timeout))?;
        let mut buf = vec![0u8; 512];
        for _ in 0..HANDSHAKE_TRIES {
            let idx = OsRng.next_u32();
            let eph = EphemeralKeypair::random(&mut OsRng);
            let (state, init) = hs_initiate(&keys.client, keys.server.public(), eph, Timestamp::now(), idx)
                .map_err(|e| BenchError::PeerUnreachable(e.to_string()))?;
            sock.send(&encode_message(&Message::Initiation(init)))?;
            let n = match sock.recv(&mut buf) {
                Ok(n) => n,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused) => continue,
                Err(e) => return Err(e.into()),
            };
            let Ok(Message::Response(r)) = decode_message(&buf[..n]) else { continue };
            let done = hs_finalize(state, Some(&r)).map_err(|e| BenchError::PeerUnreachable(e.to_string()))?;
            let session = TransportSession::from_handshake(
                done,
                r.sender_index,
                ReplayWindow::new(DEFAULT_WINDOW).expect("default window"),
                RekeyPolicy::default(),
                Instant::now(),
            );
            return Ok(Self { sock, session: Some(session) });
        }
        Err(BenchError::PeerUnreachable(format!("no handshake response from {peer}")))
    }

    /// Frames `payloads` for the wire.
    fn frame(&mut self, payloads: &[Vec<u8>]) -> Vec<Vec<u8>> {
        match self.session.as_mut() {
            None => payloads.to_vec(),
            Some(s) => seal_batch(s, payloads, Instant::now())
                .map(|msgs| msgs.into_iter().map(|m| encode_message(&Message::Data(m))).collect())
                .unwrap_or_default(),
        }
    }

    /// Strips framing from a received datagram. `None` if it does not authenticate.
    fn unframe(&mut self, bytes: &[u8]) -> Option<Vec<u8>> {
        match self.session.as_mut() {
            None => Some(bytes.to_vec()),
            Some(s) => match decode_message(bytes) {
                Ok(Message::Data(d)) => s.recv(&d, Instant::now()).ok(),
                _ => None,
            },
        }
    }
}

struct Setup {
    responder: Option<Responder>,
    sender: Sender,
}

fn setup(cfg: &BenchConfig, echo: bool) -> Result<Setup, BenchError> {
    cfg.validate()?;
    if let Some(peer) = cfg.peer {
        return Ok(Setup { responder: None, sender: Sender::connect(peer, None, cfg.timeout)? });
    }
    let keys = (cfg.mode == Mode::Tunnel).then(TunnelKeys::random);
    let responder = spawn_responder(
        cfg.mode,
        echo,
        keys.as_ref().map(|k| k.server.clone()),
        keys.as_ref().map(|k| *k.client.public()),
    )?;
    let sender = Sender::connect(responder.addr, keys.as_ref(), cfg.timeout)?;
    Ok(Setup { responder: Some(responder), sender })
}

fn random_payload(len: usize) -> Vec<u8> {
    let mut p = vec![0u8; len];
    OsRng.fill_bytes(&mut p);
    p
}

fn stop_sampler(s: Option<Sampler>) -> Vec<ResourceSample> {
    s.map(Sampler::stop).unwrap_or_default()
}

/// Saturating one-way send for `cfg.duration`. Goodput counts payload bytes
/// the responder accepted.
pub fn run_throughput(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut report = BenchReport::empty(cfg.mode, Kind::Throughput, cfg.payload_bytes);
    if cfg.duration.is_zero() {
        return Ok(report);
    }
    if cfg.peer.is_some() {
        return Err(BenchError::InvalidConfig("throughput needs the built-in responder".into()));
    }
    let Setup { responder, mut sender } = setup(cfg, false)?;
    let sampler = Sampler::start(std::process::id(), cfg.sample_interval).ok();
    let payloads = vec![random_payload(cfg.payload_bytes); SEND_BATCH];
    let start = Instant::now();
    while start.elapsed() < cfg.duration {
        for dgram in sender.frame(&payloads) {
            match sender.sock.send(&dgram) {
                Ok(_) => {
                    report.packets_sent += 1;
                    report.wire_bytes_sent += dgram.len() as u64;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {}
                Err(e) if e.raw_os_error() == Some(libc::ENOBUFS) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    report.elapsed = start.elapsed();
    std::thread::sleep(DRAIN);
    report.resources = stop_sampler(sampler);
    let counters = responder.expect("built-in responder").finish();
    report.packets_received = counters.received.load(Ordering::Relaxed);
    report.packets_rejected = counters.rejected.load(Ordering::Relaxed);
    report.payload_bytes_received = counters.bytes.load(Ordering::Relaxed);
    report.throughput_mbps = report.payload_bytes_received as f64 * 8.0 / report.elapsed.as_secs_f64() / 1e6;
    Ok(report)
}

fn tag(payload: &mut [u8], seq: u64) {
    let b = seq.to_le_bytes();
    let n = payload.len().min(8);
    payload[..n].copy_from_slice(&b[..n]);
}

/// `cfg.rtt_count` sequential echoes. Late or unauthenticated replies are
/// ignored; an echo not back within `cfg.timeout` counts as a timeout.
pub fn run_rtt(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut report = BenchReport::empty(cfg.mode, Kind::Rtt, cfg.payload_bytes);
    if cfg.rtt_count == 0 {
        return Ok(report);
    }
    let Setup { responder, mut sender } = setup(cfg, true)?;
    sender.sock.set_read_timeout(Some(cfg.timeout.min(POLL).max(Duration::from_millis(1))))?;
    let sampler = Sampler::start(std::process::id(), cfg.sample_interval).ok();
    let mut buf = vec![0u8; 65536];
    let mut payload = random_payload(cfg.payload_bytes);
    let mut samples = Vec::with_capacity(cfg.rtt_count);
    let mut timeouts = 0;
    let start = Instant::now();
    for seq in 0..cfg.rtt_count as u64 {
        tag(&mut payload, seq);
        let dgram = sender.frame(std::slice::from_ref(&payload)).pop().unwrap_or_default();
        let sent_at = Instant::now();
        if sender.sock.send(&dgram).is_ok() {
            report.packets_sent += 1;
            report.wire_bytes_sent += dgram.len() as u64;
        }
        let got = loop {
            if sent_at.elapsed() >= cfg.timeout {
                break false;
            }
            match sender.sock.recv(&mut buf) {
                Ok(n) => {
                    if sender.unframe(&buf[..n]).is_some_and(|p| p == payload) {
                        break true;
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
                Err(e) => return Err(e.into()),
            }
        };
        if got {
            let rtt = sent_at.elapsed();
            report.packets_received += 1;
            report.payload_bytes_received += payload.len() as u64;
            samples.push((sent_at.duration_since(start).as_millis() as u64, rtt.as_secs_f64() * 1e3));
        } else {
            timeouts += 1;
        }
    }
    report.elapsed = start.elapsed();
    report.resources = stop_sampler(sampler);
    if let Some(r) = responder {
        report.packets_rejected = r.finish().rejected.load(Ordering::Relaxed);
    }
    let ms: Vec<f64> = samples.iter().map(|s| s.1).collect();
    report.rtt = RttStats::from_samples(&ms, timeouts);
    report.rtt_samples = samples;
    if report.rtt.is_none() {
        let target = cfg.peer.map_or_else(|| "built-in responder".to_string(), |p| p.to_string());
        return Err(BenchError::PeerUnreachable(format!("no echo from {target} within {:?}", cfg.timeout)));
    }
    Ok(report)
}
