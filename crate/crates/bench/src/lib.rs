//! Loopback measurements of management-plane traffic, tunneled and plaintext.
//!
//! Each run stands up an echo responder on its own thread and drives it from
//! the calling thread over real UDP sockets. In tunnel mode both ends run the
//! full handshake first and every datagram is a sealed data message; in
//! plaintext mode the payload is sent as-is.
//!
//! Reports are written by [`emit`] as a long-format CSV with the header
//! `mode,metric,timestamp_ms,value` plus a gnuplot-style plot-data file.

mod emit;
mod link;
mod resources;

use std::fmt;
use std::net::SocketAddr;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

pub use emit::{emit, render_csv, render_plotdata, CSV_HEADER, PLOTDATA_FILE, REPORT_FILE};
pub use link::{run_rtt, run_throughput};
pub use resources::{sample_resources, ResourceSample, Sampler};

/// Largest UDP payload over IPv4.
pub const MAX_UDP_PAYLOAD: usize = 65507;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Tunnel,
    Plaintext,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tunnel => "tunnel",
            Mode::Plaintext => "plaintext",
        }
    }

    /// Bytes each datagram carries beyond the payload.
    pub fn overhead(self) -> usize {
        match self {
            Mode::Tunnel => ibn_core::tunnel::wire::DATA_OVERHEAD,
            Mode::Plaintext => 0,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tunnel" => Ok(Mode::Tunnel),
            "plaintext" => Ok(Mode::Plaintext),
            _ => Err(format!("unknown mode `{s}` (expected tunnel or plaintext)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub mode: Mode,
    pub payload_bytes: usize,
    pub duration: Duration,
    pub rtt_count: usize,
    pub sample_interval: Duration,
    /// Per-echo wait in RTT runs and handshake wait in tunnel mode.
    pub timeout: Duration,
    /// Plaintext only: measure against an external echo responder instead of
    /// the built-in one.
    pub peer: Option<SocketAddr>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tunnel,
            payload_bytes: 1400,
            duration: Duration::from_secs(10),
            rtt_count: 100,
            sample_interval: Duration::from_secs(1),
            timeout: Duration::from_millis(500),
            peer: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.payload_bytes == 0 || self.payload_bytes + self.mode.overhead() > MAX_UDP_PAYLOAD {
            return Err(BenchError::InvalidConfig(format!(
                "payload of {} bytes does not fit a UDP datagram in {} mode",
                self.payload_bytes, self.mode
            )));
        }
        if self.sample_interval.is_zero() {
            return Err(BenchError::InvalidConfig("sample interval must be positive".into()));
        }
        if self.peer.is_some() && self.mode == Mode::Tunnel {
            return Err(BenchError::InvalidConfig("external peers are only supported in plaintext mode".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Throughput,
    Rtt,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Throughput => "throughput",
            Kind::Rtt => "rtt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttStats {
    pub count: usize,
    pub timeouts: usize,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl RttStats {
    /// Statistics over successful samples. `None` when there are none.
    pub fn from_samples(samples_ms: &[f64], timeouts: usize) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            count: n,
            timeouts,
            min_ms: s[0],
            mean_ms: s.iter().sum::<f64>() / n as f64,
            p95_ms: s[rank - 1],
            max_ms: s[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub mode: Mode,
    pub kind: Kind,
    pub payload_bytes: usize,
    /// Offset of this run from the start of its series; added to every
    /// timestamp on output.
    pub start_ms: u64,
    pub elapsed: Duration,
    pub packets_sent: u64,
    pub packets_received: u64,
    pub packets_rejected: u64,
    /// Payload bytes accepted by the receiver.
    pub payload_bytes_received: u64,
    /// Datagram bytes put on the wire by the sender.
    pub wire_bytes_sent: u64,
    pub throughput_mbps: f64,
    pub rtt: Option<RttStats>,
    /// `(ms since run start, rtt ms)` per successful echo.
    pub rtt_samples: Vec<(u64, f64)>,
    pub resources: Vec<ResourceSample>,
}

impl BenchReport {
    pub fn empty(mode: Mode, kind: Kind, payload_bytes: usize) -> Self {
        Self {
            mode,
            kind,
            payload_bytes,
            start_ms: 0,
            elapsed: Duration::ZERO,
            packets_sent: 0,
            packets_received: 0,
            packets_rejected: 0,
            payload_bytes_received: 0,
            wire_bytes_sent: 0,
            throughput_mbps: 0.0,
            rtt: None,
            rtt_samples: Vec::new(),
            resources: Vec::new(),
        }
    }

    /// Mean wire bytes per datagram minus payload bytes. Zero when nothing was sent.
    pub fn overhead_per_packet(&self) -> f64 {
        if self.packets_sent == 0 {
            return 0.0;
        }
        (self.wire_bytes_sent as f64 / self.packets_sent as f64) - self.payload_bytes as f64
    }

    pub fn wire_bytes_per_packet(&self) -> f64 {
        if self.packets_sent == 0 {
            return 0.0;
        }
        self.wire_bytes_sent as f64 / self.packets_sent as f64
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("no such process: {0}")]
    NoSuchProcess(u32),
    #[error("resource sampling is not supported on this platform")]
    Unsupported,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Median of a non-empty slice; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Runs `runs` back-to-back measurements and lays them out on one timeline.
pub fn run_series(
    cfg: &BenchConfig,
    kind: Kind,
    runs: usize,
) -> Result<Vec<BenchReport>, BenchError> {
    let mut out = Vec::with_capacity(runs);
    let mut offset = 0u64;
    for _ in 0..runs {
        let mut r = match kind {
            Kind::Throughput => run_throughput(cfg)?,
            Kind::Rtt => run_rtt(cfg)?,
        };
        r.start_ms = offset;
        offset += r.elapsed.as_millis() as u64 + 1;
        out.push(r);
    }
    Ok(out)
}
