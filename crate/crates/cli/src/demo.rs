//! `demo up`: a controller and four peers as child processes of this binary,
//! all state under one working directory.

use std::fs::File;
use std::io::Write;
use std::net::{Ipv4Addr, TcpListener, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use ibn_core::intent::{Expectation, IntentScope, LifecycleState};
use ibn_core::pki::{RevocationRequest, StakeholderRole as Role};
use ibn_node::api::{Client, IntentView};
use ibn_node::config::ENV_PREFIX;
use ibn_node::keys::KeyDir;
use ibn_node::provision::{labelled_seed, provision, Deployment};
use ibn_node::time::Now;

use crate::args::DemoArgs;
use crate::exit::{self, CliError};

/// Ports used from the base: two per node.
pub const PORT_SPAN: u16 = 10;
const LOG_FILE: &str = "node.log";
const POLL: Duration = Duration::from_millis(50);
/// How long a parked intent is watched before the demo gives up on it.
const PARK_GRACE: Duration = Duration::from_secs(2);

pub fn area_a() -> Vec<Expectation> {
    vec![Expectation::new("service", "remote-industrial-control"), Expectation::new("area", "A")]
}

struct Node {
    name: &'static str,
    child: Child,
    log: PathBuf,
}

/// Child processes, terminated in reverse start order on drop.
struct Supervisor {
    exe: PathBuf,
    nodes: Vec<Node>,
}

impl Supervisor {
    fn spawn(&mut self, name: &'static str, args: &[&str], config: &Path) -> Result<(), CliError> {
        let log = config.with_file_name(LOG_FILE);
        let file = File::create(&log)?;
        let mut cmd = Command::new(&self.exe);
        cmd.args(args).arg("--config").arg(config).stdin(Stdio::null()).stdout(file.try_clone()?).stderr(file);
        for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)) {
            cmd.env_remove(k);
        }
        let child = cmd.spawn().map_err(|e| CliError::failure(format!("cannot start {name}: {e}")))?;
        self.nodes.push(Node { name, child, log });
        Ok(())
    }

    /// The first child that has exited, with its exit code and log tail.
    fn exited(&mut self) -> Option<(&'static str, i32, String)> {
        for n in &mut self.nodes {
            if let Ok(Some(status)) = n.child.try_wait() {
                let log = std::fs::read_to_string(&n.log).unwrap_or_default();
                let tail: Vec<&str> = log.lines().rev().take(3).collect();
                let tail = tail.into_iter().rev().collect::<Vec<_>>().join("\n");
                return Some((n.name, status.code().unwrap_or(exit::FAILURE), tail));
            }
        }
        None
    }

    fn check(&mut self) -> Result<(), CliError> {
        match self.exited() {
            Some((name, code, tail)) => {
                let code = if code == exit::OK { exit::FAILURE } else { code };
                Err(CliError::new(code, format!("{name} exited early (code {code}):\n{tail}")))
            }
            None => Ok(()),
        }
    }

    fn stop(&mut self) {
        for n in self.nodes.iter_mut().rev() {
            #[cfg(unix)]
            // SAFETY: plain signal delivery to a pid we spawned and have not reaped.
            unsafe {
                libc::kill(n.child.id() as libc::pid_t, libc::SIGTERM);
            }
        }
        let deadline = Instant::now() + Duration::from_secs(2);
        for n in self.nodes.iter_mut().rev() {
            while Instant::now() < deadline && matches!(n.child.try_wait(), Ok(None)) {
                std::thread::sleep(Duration::from_millis(10));
            }
            let _ = n.child.kill();
            let _ = n.child.wait();
        }
        self.nodes.clear();
    }
}

impl Drop for Supervisor {
    fn drop(&mut self) {
        self.stop();
    }
}

fn range_free(base: u16) -> bool {
    (base..base + PORT_SPAN).all(|p| {
        TcpListener::bind((Ipv4Addr::LOCALHOST, p)).is_ok() && UdpSocket::bind((Ipv4Addr::LOCALHOST, p)).is_ok()
    })
}

/// A base port whose whole span is free at the time of the call.
pub fn free_base_port() -> Result<u16, CliError> {
    for _ in 0..64 {
        let base = rand::random::<u16>() % 30_000 + 20_000;
        if range_free(base) {
            return Ok(base);
        }
    }
    Err(CliError::new(exit::BIND, "no free loopback port range found"))
}

async fn wait_until<F, Fut>(sup: &mut Supervisor, deadline: Instant, what: &str, mut f: F) -> Result<(), CliError>
where
    F: FnMut() -> Fut,
    Fut: std::future::Future<Output = bool>,
{
    loop {
        sup.check()?;
        if f().await {
            return Ok(());
        }
        if Instant::now() >= deadline {
            return Err(CliError::failure(format!("timed out waiting for {what}")));
        }
        tokio::time::sleep(POLL).await;
    }
}

fn complete(v: &IntentView) -> bool {
    v.record.state() == LifecycleState::Assured
        && v.descendants.len() >= 2
        && v.descendants.iter().all(|d| d.state() == LifecycleState::Assured)
}

/// Runs the demo. Progress goes to `log`; the final lineage (or JSON view) to `out`.
pub async fn up(args: DemoArgs, exe: PathBuf, out: &mut dyn Write, log: &mut dyn Write) -> Result<IntentView, CliError> {
    let started = Instant::now();
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        return Err(CliError::config("--timeout must be positive"));
    }
    let deadline = started + Duration::from_secs_f64(args.timeout);

    let _temp;
    let root = match &args.workdir {
        Some(dir) => {
            if dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
                return Err(CliError::config(format!("workdir {} is not empty", dir.display())));
            }
            std::fs::create_dir_all(dir)?;
            dir.canonicalize()?
        }
        None => {
            let t = tempfile::tempdir()?;
            let p = t.path().to_path_buf();
            _temp = t;
            p
        }
    };
    let base = match args.base_port {
        0 => free_base_port()?,
        p if p.checked_add(PORT_SPAN).is_none() => return Err(CliError::config("--base-port too high")),
        p => p,
    };
    let d: Deployment = provision(&root, base, labelled_seed(rand::random()), |c| c.fulfill_delay_ms = 200)?;
    d.write_configs()?;
    writeln!(log, "workdir {}", root.display())?;
    writeln!(log, "controller udp {} http {}", d.ibnsc.listen_udp, d.ibnsc.listen_http)?;

    let mut sup = Supervisor { exe, nodes: Vec::new() };
    sup.spawn("ibnsc", &["ibnsc", "serve"], &d.config_path(Role::Ibnsc))?;
    let ctl = Client::new(d.ibnsc.listen_http);
    wait_until(&mut sup, deadline, "the controller", || async { ctl.ca().await.is_ok() }).await?;

    for role in Role::PEERS {
        let name = match role {
            Role::Csc => "csc",
            Role::Csp => "csp",
            Role::Nop => "nop",
            _ => "visp",
        };
        sup.spawn(name, &["peer", "run"], &d.config_path(role))?;
    }
    wait_until(&mut sup, deadline, "four connected peers", || async {
        ctl.peers().await.is_ok_and(|p| p.iter().filter(|v| v.connected).count() == Role::PEERS.len())
    })
    .await?;
    writeln!(log, "4 peers enrolled and connected after {} ms", started.elapsed().as_millis())?;

    if args.revoke_csp {
        let serial = KeyDir::new(&d.peers[&Role::Csp].key_dir).load_certificate()?.serial;
        let ca = KeyDir::new(&d.ibnsc.key_dir).load_ca()?;
        ctl.revoke(&RevocationRequest::sign(&ca, serial, Now::system().unix())).await?;
        writeln!(log, "revoked CSP certificate {serial}")?;
    }

    let csc = Client::new(d.peers[&Role::Csc].listen_http);
    let resp = csc.submit(area_a()).await?;
    let id = resp.intent_id;
    writeln!(log, "submitted {} {} ({})", IntentScope::IntentCsc, id, resp.status)?;

    let mut parked_since: Option<Instant> = None;
    let view = loop {
        sup.check()?;
        if let Ok(v) = ctl.intent(&id).await {
            if complete(&v) {
                break v;
            }
            let parked = ctl.controller_status().await.is_ok_and(|s| s.parked > 0);
            if parked && v.record.state() == LifecycleState::Received {
                let since = *parked_since.get_or_insert_with(|| {
                    let _ = writeln!(log, "intent {id} parked: no authenticated session with its handler");
                    Instant::now()
                });
                if since.elapsed() >= PARK_GRACE {
                    let code = if args.revoke_csp { exit::UNAUTHORIZED } else { exit::FAILURE };
                    return Err(CliError::new(
                        code,
                        format!("intent {id} still parked in {} after {} ms; handler unavailable", v.record.state(), PARK_GRACE.as_millis()),
                    ));
                }
            }
        }
        if Instant::now() >= deadline {
            let state = ctl.intent(&id).await.map(|v| v.record.state().to_string()).unwrap_or_else(|_| "unknown".into());
            return Err(CliError::failure(format!("intent {id} not assured before the deadline (state {state})")));
        }
        tokio::time::sleep(POLL).await;
    };
    writeln!(log, "assured after {} ms", started.elapsed().as_millis())?;

    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&view).map_err(|e| CliError::failure(e.to_string()))?)?;
    } else {
        crate::commands::write_view(out, &view)?;
    }
    sup.stop();
    writeln!(log, "torn down after {} ms", started.elapsed().as_millis())?;
    Ok(view)
}
