//! Command-line surface.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ibn_bench::Mode;
use ibn_core::pki::StakeholderRole;

/// Intent management plane: security controller, stakeholder peers,
/// benchmarks and a local end-to-end demo.
///
/// Exit codes: 0 success, 1 failure, 2 configuration or key material,
/// 3 address already in use, 4 not authorized.
#[derive(Debug, Parser)]
#[command(name = "ibnmp", version)]
pub struct Cli {
    /// Log filter (`info`, `ibn_node=debug`, ...). `RUST_LOG` takes precedence;
    /// otherwise daemons use the config's `log_level`.
    #[arg(long, global = true, env = "IBNMP_LOG")]
    pub log: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run or query the security controller.
    Ibnsc(IbnscArgs),
    /// Run or drive a stakeholder peer.
    Peer(PeerArgs),
    /// Tunnel versus plaintext measurements over loopback.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Generate a static keypair (and with --ibnsc, the CA and enrollment secret).
    Keygen(KeygenArgs),
    /// Local end-to-end deployment.
    #[command(subcommand)]
    Demo(DemoCommand),
}

#[derive(Debug, Args)]
pub struct IbnscArgs {
    /// Controller config file.
    #[arg(long, short, global = true, env = "IBNMP_CONFIG", default_value = "node.conf")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: IbnscCommand,
}

#[derive(Debug, Subcommand)]
pub enum IbnscCommand {
    /// Serve the tunnel endpoint and the registry API until interrupted.
    Serve,
    /// Query global intent records.
    #[command(subcommand)]
    Intent(IntentCommand),
    /// List registered peers.
    Peers {
        #[arg(long)]
        json: bool,
    },
    /// Read the audit log.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Print the enrollment token for a role.
    Token { role: StakeholderRole },
    /// Revoke a certificate by serial.
    Revoke { serial: u64 },
}

#[derive(Debug, Subcommand)]
pub enum IntentCommand {
    /// Show one intent with its lineage, history and descendants.
    Show {
        id: String,
        #[arg(long)]
        json: bool,
    },
    /// List all intents.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCommand {
    /// Print the most recent audit events.
    Tail {
        #[arg(short = 'n', long, default_value_t = 20)]
        lines: usize,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
pub struct PeerArgs {
    /// Peer config file.
    #[arg(long, short, global = true, env = "IBNMP_CONFIG", default_value = "node.conf")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: PeerCommand,
}

#[derive(Debug, Subcommand)]
pub enum PeerCommand {
    /// Enroll if needed, connect to the controller and serve until interrupted.
    Run {
        /// Must agree with the config's `role` when both are given.
        #[arg(long)]
        role: Option<StakeholderRole>,
    },
    /// Obtain a certificate for the current static key.
    Enroll {
        /// Generate a fresh static key first.
        #[arg(long)]
        rotate: bool,
    },
    /// Submit an intent through a running consumer peer.
    Submit {
        /// Expectation as `key=value`; repeatable.
        #[arg(long = "kv", value_name = "KEY=VALUE", required = true, value_parser = parse_kv)]
        kv: Vec<(String, String)>,
        #[arg(long)]
        json: bool,
    },
    /// Show the running peer's connection and outbox state.
    Status {
        #[arg(long)]
        json: bool,
    },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Saturating one-way send; goodput over payload bytes.
    Throughput(BenchArgs),
    /// Sequential echo round trips.
    Rtt(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Modes to measure, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [Mode::Tunnel, Mode::Plaintext])]
    pub mode: Vec<Mode>,
    /// Payload bytes per datagram.
    #[arg(long, default_value_t = 1400)]
    pub payload: usize,
    /// Seconds per throughput run.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Echo exchanges per RTT run.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Runs per mode; medians are reported.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// CPU and memory sampling interval in milliseconds.
    #[arg(long, default_value_t = 1000)]
    pub sample_ms: u64,
    /// Plaintext only: an external UDP echo responder.
    #[arg(long)]
    pub peer: Option<SocketAddr>,
    /// Directory for report.csv and plotdata.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Key directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing key files.
    #[arg(long)]
    pub force: bool,
    /// 32-byte hex seed for reproducible fixtures.
    #[arg(long)]
    pub seed: Option<String>,
    /// Also write the CA key and the enrollment master secret.
    #[arg(long)]
    pub ibnsc: bool,
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    /// Start a controller and four peers as child processes, run the Area-A
    /// intent to Assured, print its lineage and tear everything down.
    Up(DemoArgs),
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Empty or missing directory for all demo state. Defaults to a
    /// temporary directory removed afterwards.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    /// First of ten consecutive loopback ports; 0 picks a free range.
    #[arg(long, default_value_t = 0)]
    pub base_port: u16,
    /// Revoke the CSP certificate before submitting.
    #[arg(long)]
    pub revoke_csp: bool,
    /// Overall deadline in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub timeout: f64,
    /// Print the final intent view as JSON instead of the lineage table.
    #[arg(long)]
    pub json: bool,
}
