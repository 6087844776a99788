use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ibn_core::crypto::{PublicKey, StaticKeypair};
use ibn_core::intent::{Expectation, IntentId, TranslationRule};
use ibn_core::pki::{verify_certificate, CaPublicKey, Certificate, EnrollmentRequest, StakeholderRole};
use ibn_core::plane::AckStatus;
use tokio::net::UdpSocket;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use super::{bind_tcp, bind_udp, http_error, random_seed, read_log, DaemonError, LogFile, OUTBOX_LOG};
use crate::agent::{Agent, AgentError, AgentEvent, AgentSettings, AgentStatus, OutboxLogEntry};
use crate::api::{Client, ClientError, SubmitRequest, SubmitResponse};
use crate::config::Config;
use crate::keys::{read_hex, write_hex, KeyDir, KeyError};
use crate::time::{Now, RetryPolicy};

/// How long `POST /submit` waits for the controller's acknowledgement: the
/// full retransmission budget plus one handshake attempt.
pub const SUBMIT_TIMEOUT: Duration = Duration::from_millis(6200 + 1000);

const IBNSC_PUB: &str = "ibnsc.pub";
const ENROLL_ATTEMPTS: u32 = 25;

fn role_of(cfg: &Config) -> Result<StakeholderRole, DaemonError> {
    match cfg.role {
        Some(r) if r.is_peer() => Ok(r),
        Some(r) => Err(DaemonError::Other(format!("role {r} cannot run as a peer"))),
        None => Err(DaemonError::Other("config key `role` is required for peers".into())),
    }
}

fn check_subject(cert: &Certificate, ca: &CaPublicKey, role: StakeholderRole, key: &PublicKey, now: u64) -> Result<(), DaemonError> {
    verify_certificate(cert, ca, now, |_| false).map_err(|_| DaemonError::CaMismatch)?;
    if cert.subject_role != role || cert.subject_static_pub != *key {
        return Err(DaemonError::EnrollmentRejected("certificate subject does not match this peer".into()));
    }
    Ok(())
}

/// Ensures a static key exists, obtains a certificate for it from the
/// controller, verifies it against the local CA key and stores it.
pub async fn enroll(cfg: &Config) -> Result<Certificate, DaemonError> {
    let role = role_of(cfg)?;
    let keys = KeyDir::new(&cfg.key_dir);
    let ca = keys.load_ca_pub()?;
    let token = keys.load_token()?;
    let static_key = match keys.load_static() {
        Ok(k) => k,
        Err(KeyError::Missing(_)) => keys.write_static(random_seed(), false)?,
        Err(e) => return Err(e.into()),
    };
    let client = Client::new(cfg.ibnsc_http);
    let now = Now::system();
    let req = EnrollmentRequest::new(role, *static_key.public(), now.unix(), &token);
    let mut attempt = 0;
    let cert = loop {
        match client.register(&req).await {
            Ok(c) => break c,
            Err(ClientError::Unreachable(..)) if attempt + 1 < ENROLL_ATTEMPTS => {
                attempt += 1;
                tokio::time::sleep(Duration::from_millis(200)).await;
            }
            Err(e) => return Err(DaemonError::EnrollmentRejected(e.to_string())),
        }
    };
    check_subject(&cert, &ca, role, static_key.public(), now.unix())?;
    keys.write_certificate(&cert)?;
    tracing::info!(%role, serial = cert.serial, "enrolled");
    Ok(cert)
}

/// Replaces the static key and enrolls the new one. The controller drops the
/// old key's certificate and sessions.
pub async fn rotate_and_enroll(cfg: &Config) -> Result<Certificate, DaemonError> {
    KeyDir::new(&cfg.key_dir).write_static(random_seed(), true)?;
    enroll(cfg).await
}

/// The controller's static key, checked against the local CA key. Cached in
/// the key directory for starts while the registry is unreachable.
async fn controller_key(cfg: &Config, client: &Client, ca: &CaPublicKey) -> Result<PublicKey, DaemonError> {
    let keys = KeyDir::new(&cfg.key_dir);
    let cache = keys.path(IBNSC_PUB);
    match client.peer_certificate(StakeholderRole::Ibnsc).await {
        Ok(cert) => {
            verify_certificate(&cert, ca, Now::system().unix(), |_| false).map_err(|_| DaemonError::CaMismatch)?;
            if cert.subject_role != StakeholderRole::Ibnsc {
                return Err(DaemonError::CaMismatch);
            }
            write_hex(&cache, &cert.encode(), false, true)?;
            Ok(cert.subject_static_pub)
        }
        Err(e) => {
            tracing::warn!(%e, "registry unreachable, using cached controller certificate");
            let bytes = read_hex(&cache).map_err(|_| DaemonError::Other(format!("cannot reach registry: {e}")))?;
            let cert = Certificate::decode(&bytes).map_err(|e| DaemonError::Other(e.to_string()))?;
            verify_certificate(&cert, ca, Now::system().unix(), |_| false).map_err(|_| DaemonError::CaMismatch)?;
            Ok(cert.subject_static_pub)
        }
    }
}

/// Asks the registry whether `serial` still authorizes this peer. Network
/// failures count as "still good".
async fn still_authorized(client: &Client, serial: u64) -> Result<(), DaemonError> {
    match client.cert_status(serial).await {
        Ok(st) if st.revoked => Err(DaemonError::Unauthorized(format!("serial {serial} revoked"))),
        Ok(st) if !st.active => Err(DaemonError::Unauthorized(format!("serial {serial} superseded"))),
        Ok(_) => Ok(()),
        Err(ClientError::Status { status: 404, .. }) => {
            Err(DaemonError::Unauthorized(format!("serial {serial} unknown to registry")))
        }
        Err(e) => {
            tracing::debug!(%e, "registry check skipped");
            Ok(())
        }
    }
}

fn load_rules(cfg: &Config) -> Result<Vec<TranslationRule>, DaemonError> {
    match &cfg.rules_path {
        None => Ok(ibn_core::intent::default_rules()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(super::io_err(p))?;
            serde_json::from_str(&text).map_err(|e| DaemonError::Other(format!("{}: {e}", p.display())))
        }
    }
}

enum Command {
    Submit { expectations: Vec<Expectation>, reply: oneshot::Sender<Result<(IntentId, AckStatus), AgentError>> },
    Status { reply: oneshot::Sender<AgentStatus> },
}

pub struct PeerHandle {
    pub role: StakeholderRole,
    pub udp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    stop: watch::Sender<bool>,
    agent_task: JoinHandle<Result<(), DaemonError>>,
    http_task: JoinHandle<()>,
}

impl PeerHandle {
    pub async fn shutdown(self) -> Result<(), DaemonError> {
        let _ = self.stop.send(true);
        let r = self.agent_task.await.unwrap_or_else(|e| Err(DaemonError::Other(e.to_string())));
        let _ = self.http_task.await;
        r
    }

    /// Runs until `signal` resolves or the agent stops on its own, which
    /// only happens on a terminal error.
    pub async fn run_until(mut self, signal: impl std::future::Future<Output = ()>) -> Result<(), DaemonError> {
        tokio::select! {
            _ = signal => self.shutdown().await,
            r = &mut self.agent_task => {
                let _ = self.stop.send(true);
                let _ = self.http_task.await;
                r.unwrap_or_else(|e| Err(DaemonError::Other(e.to_string())))
            }
        }
    }
}

/// Enrolls if needed, then starts the agent's datagram loop and the control
/// HTTP interface. Returns once both are bound.
pub async fn start_peer(cfg: &Config) -> Result<PeerHandle, DaemonError> {
    let role = role_of(cfg)?;
    let keys = KeyDir::new(&cfg.key_dir);
    let ca = keys.load_ca_pub()?;
    let client = Client::new(cfg.ibnsc_http);

    let cert = match keys.load_certificate() {
        Ok(c) if keys.load_static().is_ok_and(|k| *k.public() == c.subject_static_pub) => {
            check_subject(&c, &ca, role, &c.subject_static_pub, Now::system().unix())?;
            still_authorized(&client, c.serial).await?;
            c
        }
        Ok(_) | Err(KeyError::Missing(_)) => enroll(cfg).await?,
        Err(e) => return Err(e.into()),
    };
    let static_key: StaticKeypair = keys.load_static()?;
    let ibnsc = controller_key(cfg, &client, &ca).await?;

    std::fs::create_dir_all(&cfg.data_dir).map_err(super::io_err(&cfg.data_dir))?;
    let settings = AgentSettings {
        replay_window: cfg.replay_window,
        policy: cfg.rekey_policy(),
        retry: RetryPolicy::default(),
        fulfill_delay: Duration::from_millis(cfg.fulfill_delay_ms),
        rules: load_rules(cfg)?,
    };
    let mut agent = Agent::new(role, static_key, ibnsc, settings, random_seed());
    let outbox_path = cfg.data_dir.join(OUTBOX_LOG);
    let journal = read_log(&outbox_path, OutboxLogEntry::from_line)?;
    let compact = agent.restore(journal);
    let tmp = outbox_path.with_extension("log.tmp");
    let text: String = compact.iter().map(|e| e.to_line() + "\n").collect();
    std::fs::write(&tmp, text).map_err(super::io_err(&tmp))?;
    std::fs::rename(&tmp, &outbox_path).map_err(super::io_err(&outbox_path))?;
    let outbox = LogFile::open(outbox_path)?;

    let udp = bind_udp(cfg.listen_udp).await?;
    udp.connect(cfg.ibnsc_udp).await.map_err(|e| DaemonError::Other(format!("udp connect: {e}")))?;
    let tcp = bind_tcp(cfg.listen_http).await?;
    let udp_addr = udp.local_addr().map_err(|e| DaemonError::Other(e.to_string()))?;
    let http_addr = tcp.local_addr().map_err(|e| DaemonError::Other(e.to_string()))?;

    let (stop, stop_rx) = watch::channel(false);
    let (tx, rx) = mpsc::channel(64);
    let driver = Driver { agent, udp, outbox, client, serial: cert.serial, waiters: HashMap::new() };
    let agent_task = tokio::spawn(driver.run(rx, stop_rx.clone()));
    let app = Router::new().route("/submit", post(post_submit)).route("/status", get(get_status)).with_state(tx);
    let mut http_stop = stop_rx;
    let http_task = tokio::spawn(async move {
        let serve = axum::serve(tcp, app).with_graceful_shutdown(async move {
            let _ = http_stop.wait_for(|s| *s).await;
        });
        if let Err(e) = serve.await {
            tracing::error!(%e, "control server failed");
        }
    });
    tracing::info!(%role, %udp_addr, %http_addr, serial = cert.serial, "peer started");
    Ok(PeerHandle { role, udp_addr, http_addr, stop, agent_task, http_task })
}

struct Driver {
    agent: Agent,
    udp: UdpSocket,
    outbox: LogFile,
    client: Client,
    serial: u64,
    waiters: HashMap<IntentId, oneshot::Sender<Result<(IntentId, AckStatus), AgentError>>>,
}

impl Driver {
    async fn send(&mut self, packets: Vec<Vec<u8>>) {
        for p in packets {
            if let Err(e) = self.udp.send(&p).await {
                tracing::debug!(%e, "udp send failed");
            }
        }
    }

    async fn after(&mut self, packets: Vec<Vec<u8>>) -> Result<(), DaemonError> {
        self.send(packets).await;
        let journal = self.agent.take_journal();
        self.outbox.append(journal.iter().map(OutboxLogEntry::to_line));
        for ev in self.agent.take_events() {
            match ev {
                AgentEvent::Acked { intent, status, .. } => {
                    if let Some(w) = self.waiters.remove(&intent) {
                        let _ = w.send(Ok((intent, status)));
                    }
                }
                AgentEvent::HandshakeTimeout { attempts } => {
                    tracing::warn!(attempts, "no handshake response");
                    still_authorized(&self.client, self.serial).await?;
                }
                AgentEvent::SessionEstablished { rekey, .. } => tracing::info!(rekey, "session established"),
                AgentEvent::Timeout { intent, .. } => tracing::warn!(%intent, "envelope unacknowledged after retry budget"),
                other => tracing::info!(?other, "agent event"),
            }
        }
        Ok(())
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>, mut stop: watch::Receiver<bool>) -> Result<(), DaemonError> {
        let first = self.agent.connect(Now::system());
        self.after(first).await?;
        let mut buf = vec![0u8; 65536];
        loop {
            let cap = std::time::Instant::now() + Duration::from_millis(500);
            let deadline = self.agent.next_deadline().map_or(cap, |d| d.min(cap));
            let out = tokio::select! {
                _ = stop.wait_for(|s| *s) => break,
                r = self.udp.recv(&mut buf) => match r {
                    Ok(n) => self.agent.handle_datagram(&buf[..n], Now::system()),
                    Err(e) => {
                        tracing::debug!(%e, "udp receive error");
                        Vec::new()
                    }
                },
                Some(cmd) = rx.recv() => match cmd {
                    Command::Submit { expectations, reply } => match self.agent.submit(expectations, Now::system()) {
                        Ok((id, out)) => {
                            self.waiters.insert(id, reply);
                            out
                        }
                        Err(e) => {
                            let _ = reply.send(Err(e));
                            Vec::new()
                        }
                    },
                    Command::Status { reply } => {
                        let _ = reply.send(self.agent.status(Now::system()));
                        Vec::new()
                    }
                },
                _ = tokio::time::sleep_until(deadline.into()) => self.agent.poll(Now::system()),
            };
            self.after(out).await?;
        }
        Ok(())
    }
}

async fn post_submit(State(tx): State<mpsc::Sender<Command>>, Json(req): Json<SubmitRequest>) -> Response {
    let (reply, rx) = oneshot::channel();
    if tx.send(Command::Submit { expectations: req.expectations, reply }).await.is_err() {
        return http_error(StatusCode::SERVICE_UNAVAILABLE, "agent stopped");
    }
    match tokio::time::timeout(SUBMIT_TIMEOUT, rx).await {
        Ok(Ok(Ok((id, status)))) => {
            let code = if status.is_success() { StatusCode::OK } else { StatusCode::UNPROCESSABLE_ENTITY };
            (code, Json(SubmitResponse { intent_id: id, status: format!("{status:?}") })).into_response()
        }
        Ok(Ok(Err(e @ AgentError::NotConsumerRole(_)))) => http_error(StatusCode::FORBIDDEN, e),
        Ok(Ok(Err(e))) => http_error(StatusCode::BAD_REQUEST, e),
        Ok(Err(_)) => http_error(StatusCode::SERVICE_UNAVAILABLE, "agent stopped"),
        Err(_) => http_error(StatusCode::GATEWAY_TIMEOUT, "Timeout: controller did not acknowledge within the retry budget"),
    }
}

async fn get_status(State(tx): State<mpsc::Sender<Command>>) -> Response {
    let (reply, rx) = oneshot::channel();
    if tx.send(Command::Status { reply }).await.is_err() {
        return http_error(StatusCode::SERVICE_UNAVAILABLE, "agent stopped");
    }
    match rx.await {
        Ok(s) => Json(s).into_response(),
        Err(_) => http_error(StatusCode::SERVICE_UNAVAILABLE, "agent stopped"),
    }
}
