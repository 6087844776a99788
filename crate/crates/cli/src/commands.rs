//! Subcommand implementations other than the demo.

use std::collections::HashMap;
use std::io::Write;
use std::time::Duration;

use ibn_bench::{emit, median, run_series, BenchConfig, BenchReport, Kind, Mode};
use ibn_core::intent::{Expectation, IntentId};
use ibn_core::pki::{enrollment_token, RevocationRequest, StakeholderRole};
use ibn_node::api::{Client, IntentView};
use ibn_node::config::{load_config, Config};
use ibn_node::daemon::{self, start_ibnsc, start_peer};
use ibn_node::keys::{write_hex, KeyDir, ENROLL_MASTER};
use ibn_node::provision::labelled_seed;
use ibn_node::time::Now;
use serde_json::to_string_pretty;

use crate::args::*;
use crate::exit::CliError;
use crate::shutdown_signal;

type Out<'a> = &'a mut dyn Write;

fn config(path: &std::path::Path, env: &HashMap<String, String>) -> Result<Config, CliError> {
    Ok(load_config(path, env)?)
}

fn json<T: serde::Serialize>(out: Out, v: &T) -> Result<(), CliError> {
    writeln!(out, "{}", to_string_pretty(v).map_err(|e| CliError::failure(e.to_string()))?)?;
    Ok(())
}

pub async fn ibnsc(args: IbnscArgs, env: &HashMap<String, String>, out: Out<'_>) -> Result<(), CliError> {
    let cfg = config(&args.config, env)?;
    match args.command {
        IbnscCommand::Serve => {
            crate::init_logging(&cfg.log_level);
            let h = start_ibnsc(&cfg).await?;
            tracing::info!(udp = %h.udp_addr, http = %h.http_addr, "ibnsc serving");
            h.run_until(shutdown_signal()).await;
        }
        IbnscCommand::Intent(IntentCommand::Show { id, json: as_json }) => {
            let id: IntentId = id.parse().map_err(|e| CliError::config(format!("intent id: {e}")))?;
            let view = Client::new(cfg.listen_http).intent(&id).await?;
            if as_json {
                json(out, &view)?;
            } else {
                write_view(out, &view)?;
            }
        }
        IbnscCommand::Intent(IntentCommand::List { json: as_json }) => {
            let list = Client::new(cfg.listen_http).intents().await?;
            if as_json {
                json(out, &list)?;
            } else {
                for i in list {
                    writeln!(out, "{}  {:<10} {} -> {}  {}", i.id, i.scope, i.owner, i.handler, i.state)?;
                }
            }
        }
        IbnscCommand::Peers { json: as_json } => {
            let peers = Client::new(cfg.listen_http).peers().await?;
            if as_json {
                json(out, &peers)?;
            } else {
                writeln!(out, "{:<6} {:>6}  {:<9} {:<8} static", "role", "serial", "connected", "revoked")?;
                for p in peers {
                    writeln!(out, "{:<6} {:>6}  {:<9} {:<8} {}", p.role, p.serial, p.connected, p.revoked, p.static_pub)?;
                }
            }
        }
        IbnscCommand::Audit(AuditCommand::Tail { lines, json: as_json }) => {
            let events = ibn_node::audit::tail(&cfg.data_dir.join(daemon::AUDIT_LOG), lines)?;
            if as_json {
                json(out, &events)?;
            } else {
                for e in events {
                    let src = e.source.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
                    let role = e.role.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
                    writeln!(out, "{} {:?} {} {} {}", e.at, e.kind, src, role, e.detail)?;
                }
            }
        }
        IbnscCommand::Token { role } => {
            if role == StakeholderRole::Ibnsc {
                return Err(CliError::config("the controller does not enroll"));
            }
            let master = KeyDir::new(&cfg.key_dir).load_master()?;
            writeln!(out, "{}", hex::encode(enrollment_token(&master, role)))?;
        }
        IbnscCommand::Revoke { serial } => {
            let ca = KeyDir::new(&cfg.key_dir).load_ca()?;
            let req = RevocationRequest::sign(&ca, serial, Now::system().unix());
            let r = Client::new(cfg.listen_http).revoke(&req).await?;
            writeln!(out, "revoked certificate {}", r.serial)?;
        }
    }
    Ok(())
}

pub async fn peer(args: PeerArgs, env: &HashMap<String, String>, out: Out<'_>) -> Result<(), CliError> {
    let mut cfg = config(&args.config, env)?;
    match args.command {
        PeerCommand::Run { role } => {
            match (role, cfg.role) {
                (Some(r), Some(c)) if r != c => {
                    return Err(CliError::config(format!("--role {r} disagrees with config role {c}")));
                }
                (Some(r), _) => cfg.role = Some(r),
                (None, Some(_)) => {}
                (None, None) => return Err(CliError::config("no role given in config or on the command line")),
            }
            crate::init_logging(&cfg.log_level);
            let h = start_peer(&cfg).await?;
            tracing::info!(role = %h.role, udp = %h.udp_addr, http = %h.http_addr, "peer running");
            h.run_until(shutdown_signal()).await?;
        }
        PeerCommand::Enroll { rotate } => {
            let cert = if rotate { daemon::rotate_and_enroll(&cfg).await? } else { daemon::enroll(&cfg).await? };
            writeln!(out, "enrolled {} serial {}", cert.subject_role, cert.serial)?;
        }
        PeerCommand::Submit { kv, json: as_json } => {
            let exps = kv.into_iter().map(|(k, v)| Expectation::new(k, v)).collect();
            let r = Client::new(cfg.listen_http).submit(exps).await?;
            if as_json {
                json(out, &r)?;
            } else {
                writeln!(out, "{} {}", r.intent_id, r.status)?;
            }
        }
        PeerCommand::Status { json: as_json } => {
            let s = Client::new(cfg.listen_http).agent_status().await?;
            if as_json {
                json(out, &s)?;
            } else {
                writeln!(out, "role       {}", s.role)?;
                writeln!(out, "connected  {}", s.connected)?;
                if let Some(age) = s.session_age_ms {
                    writeln!(out, "session    {age} ms")?;
                }
                writeln!(out, "handshakes {}", s.handshakes)?;
                writeln!(out, "outbox     {}", s.outbox)?;
                writeln!(out, "submitted  {}", s.submitted.join(" "))?;
                writeln!(out, "handled    {}", s.handled)?;
            }
        }
    }
    Ok(())
}

pub fn bench(cmd: BenchCommand, out: Out<'_>) -> Result<(), CliError> {
    let (kind, args) = match cmd {
        BenchCommand::Throughput(a) => (Kind::Throughput, a),
        BenchCommand::Rtt(a) => (Kind::Rtt, a),
    };
    if args.runs == 0 {
        return Err(CliError::config("--runs must be at least 1"));
    }
    if !args.duration.is_finite() || args.duration < 0.0 {
        return Err(CliError::config("--duration must be a non-negative number of seconds"));
    }
    let mut all: Vec<BenchReport> = Vec::new();
    for mode in args.mode.iter().copied() {
        let cfg = BenchConfig {
            mode,
            payload_bytes: args.payload,
            duration: Duration::from_secs_f64(args.duration),
            rtt_count: args.count,
            sample_interval: Duration::from_millis(args.sample_ms),
            peer: if mode == Mode::Plaintext { args.peer } else { None },
            ..BenchConfig::default()
        };
        cfg.validate()?;
        let mut reports = run_series(&cfg, kind, args.runs)?;
        let offset = all.last().map(|r| r.start_ms + r.elapsed.as_millis() as u64 + 1).unwrap_or(0);
        for r in &mut reports {
            r.start_ms += offset;
        }
        summarize(out, kind, mode, &reports)?;
        all.extend(reports);
    }
    if let Some(dir) = args.out {
        let (csv, plot) = emit(&all, &dir)?;
        writeln!(out, "wrote {} and {}", csv.display(), plot.display())?;
    }
    Ok(())
}

fn summarize(out: Out, kind: Kind, mode: Mode, reports: &[BenchReport]) -> Result<(), CliError> {
    let r0 = &reports[0];
    match kind {
        Kind::Throughput => {
            let g: Vec<f64> = reports.iter().map(|r| r.throughput_mbps).collect();
            writeln!(
                out,
                "{mode:<9} payload {} B  wire {:.0} B/pkt  median goodput {:.1} Mbit/s over {} runs",
                r0.payload_bytes,
                r0.wire_bytes_per_packet(),
                median(&g).unwrap_or(0.0),
                reports.len()
            )?;
        }
        Kind::Rtt => {
            let pick = |f: fn(&ibn_bench::RttStats) -> f64| {
                median(&reports.iter().filter_map(|r| r.rtt.as_ref().map(f)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
            };
            writeln!(
                out,
                "{mode:<9} payload {} B  median rtt min {:.3} / mean {:.3} / p95 {:.3} / max {:.3} ms over {} runs",
                r0.payload_bytes,
                pick(|s| s.min_ms),
                pick(|s| s.mean_ms),
                pick(|s| s.p95_ms),
                pick(|s| s.max_ms),
                reports.len()
            )?;
        }
    }
    Ok(())
}

pub fn keygen(args: KeygenArgs, out: Out<'_>) -> Result<(), CliError> {
    let seed: [u8; 32] = match &args.seed {
        Some(s) => hex::decode(s.trim())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| CliError::config("--seed must be 64 hex characters"))?,
        None => rand::random(),
    };
    let keys = KeyDir::new(&args.out);
    let kp = keys.write_static(seed, args.force)?;
    writeln!(out, "static public key {}", hex::encode(kp.public().as_bytes()))?;
    if args.ibnsc {
        let derive = labelled_seed(seed);
        let ca = keys.write_ca(derive("ca"), args.force)?;
        write_hex(&keys.path(ENROLL_MASTER), &derive("enroll-master"), true, args.force)?;
        writeln!(out, "ca public key     {}", hex::encode(ca.public_key().0))?;
    }
    writeln!(out, "written to {}", args.out.display())?;
    Ok(())
}

/// Human-readable lineage: ancestors down to the queried intent, then its
/// descendants indented by depth.
pub fn write_view(out: Out, view: &IntentView) -> std::io::Result<()> {
    for (depth, s) in view.lineage.iter().rev().enumerate() {
        let pad = "  ".repeat(depth);
        writeln!(out, "{pad}{} {} {} -> {} {}", s.scope, s.id, s.owner, s.handler, s.state)?;
    }
    let base = view.lineage.len().saturating_sub(1);
    let r = &view.record;
    let pad = "  ".repeat(base);
    for e in &r.intent.expectations {
        match &e.target {
            Some(t) => writeln!(out, "{pad}  expect {}={} ({} {})", e.key, e.value, t.value, t.unit)?,
            None => writeln!(out, "{pad}  expect {}={}", e.key, e.value)?,
        }
    }
    write_history(out, &pad, r)?;
    let mut depth_of: HashMap<IntentId, usize> = HashMap::from([(r.intent.id, base)]);
    for d in &view.descendants {
        let depth = d.intent.parent_id.and_then(|p| depth_of.get(&p)).map_or(base + 1, |x| x + 1);
        depth_of.insert(d.intent.id, depth);
        let pad = "  ".repeat(depth);
        writeln!(out, "{pad}{} {} {} -> {} {}", d.intent.scope, d.intent.id, d.intent.owner, d.intent.handler, d.state())?;
        write_history(out, &pad, d)?;
    }
    Ok(())
}

fn write_history(out: Out, pad: &str, r: &ibn_node::records::GlobalIntentRecord) -> std::io::Result<()> {
    let steps: Vec<String> = r.history.iter().map(|h| format!("{}@{}", h.state, h.by)).collect();
    writeln!(out, "{pad}  history {}", steps.join(" "))?;
    for (role, metrics) in &r.metrics {
        let m: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "{pad}  metrics from {role}: {}", m.join(" "))?;
    }
    Ok(())
}
