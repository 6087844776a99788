use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ibn_core::intent::IntentId;
use ibn_core::pki::{EnrollmentRequest, PkiError, RecordEnvelope, RegistryLogEntry, RevocationRequest, StakeholderRole};
use tokio::net::UdpSocket;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use super::{bind_tcp, bind_udp, http_error, random_seed, read_log, DaemonError, LogFile};
use super::{AUDIT_LOG, RECORDS_LOG, REGISTRY_LOG};
use crate::api::{CertStatus, ControllerStatus, IntentSummary, IntentView, PeerView, RevokeResponse, SessionView};
use crate::audit::AuditLog;
use crate::config::Config;
use crate::controller::{Controller, ControllerSettings};
use crate::keys::KeyDir;
use crate::records::RecordLogEntry;
use crate::time::Now;

struct Shared {
    ctl: Controller,
    registry_log: LogFile,
    records_log: LogFile,
    audit: AuditLog,
}

impl Shared {
    /// Writes out everything the controller queued for persistence.
    fn persist(&mut self) {
        let reg = self.ctl.take_registry_log();
        self.registry_log.append(reg.iter().map(RegistryLogEntry::to_line));
        let rec = self.ctl.take_record_log();
        self.records_log.append(rec.iter().map(RecordLogEntry::to_line));
        let audit = self.ctl.take_audit();
        if let Err(e) = self.audit.append(&audit) {
            tracing::error!(%e, "audit append failed");
        }
    }
}

type AppState = Arc<Mutex<Shared>>;

fn lock(s: &AppState) -> MutexGuard<'_, Shared> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

/// A running controller. Dropping the handle does not stop it.
pub struct IbnscHandle {
    pub udp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    stop: watch::Sender<bool>,
    udp_task: JoinHandle<()>,
    http_task: JoinHandle<()>,
}

impl IbnscHandle {
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.udp_task.await;
        let _ = self.http_task.await;
    }

    /// Runs until the tasks end or `signal` resolves.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()>) {
        signal.await;
        self.shutdown().await;
    }
}

/// Loads key material and persisted state, binds both ports and starts
/// serving. Returns once the sockets are bound.
pub async fn start_ibnsc(cfg: &Config) -> Result<IbnscHandle, DaemonError> {
    let keys = KeyDir::new(&cfg.key_dir);
    let static_key = keys.load_static()?;
    let ca = keys.load_ca()?;
    let master = keys.load_master()?;
    std::fs::create_dir_all(&cfg.data_dir).map_err(super::io_err(&cfg.data_dir))?;

    let settings = ControllerSettings {
        replay_window: cfg.replay_window,
        policy: cfg.rekey_policy(),
        park_capacity: cfg.park_capacity,
        ..Default::default()
    };
    let mut ctl = Controller::new(static_key, ca, master, settings, random_seed());
    let reg_path = cfg.data_dir.join(REGISTRY_LOG);
    let rec_path = cfg.data_dir.join(RECORDS_LOG);
    let registry = read_log(&reg_path, RegistryLogEntry::from_line)?;
    let records = read_log(&rec_path, RecordLogEntry::from_line)?;
    tracing::info!(registry = registry.len(), records = records.len(), "replaying logs");
    ctl.restore(registry, records).map_err(|e| DaemonError::Other(format!("registry log: {e}")))?;
    ctl.ensure_own_certificate(Now::system()).map_err(|e| DaemonError::Other(e.to_string()))?;

    let udp = Arc::new(bind_udp(cfg.listen_udp).await?);
    let tcp = bind_tcp(cfg.listen_http).await?;
    let udp_addr = udp.local_addr().map_err(|e| DaemonError::Other(e.to_string()))?;
    let http_addr = tcp.local_addr().map_err(|e| DaemonError::Other(e.to_string()))?;

    let mut shared = Shared {
        ctl,
        registry_log: LogFile::open(reg_path)?,
        records_log: LogFile::open(rec_path)?,
        audit: AuditLog::open(&cfg.data_dir.join(AUDIT_LOG)).map_err(super::io_err(&cfg.data_dir))?,
    };
    shared.persist();
    let state: AppState = Arc::new(Mutex::new(shared));
    let (stop, stop_rx) = watch::channel(false);

    let udp_task = tokio::spawn(udp_loop(state.clone(), udp, stop_rx.clone()));
    let app = router(state);
    let mut http_stop = stop_rx;
    let http_task = tokio::spawn(async move {
        let serve = axum::serve(tcp, app.into_make_service_with_connect_info::<SocketAddr>()).with_graceful_shutdown(async move {
            let _ = http_stop.wait_for(|s| *s).await;
        });
        if let Err(e) = serve.await {
            tracing::error!(%e, "http server failed");
        }
    });
    tracing::info!(%udp_addr, %http_addr, "controller listening");
    Ok(IbnscHandle { udp_addr, http_addr, stop, udp_task, http_task })
}

async fn udp_loop(state: AppState, udp: Arc<UdpSocket>, mut stop: watch::Receiver<bool>) {
    let mut buf = vec![0u8; 65536];
    loop {
        let deadline = {
            let s = lock(&state);
            let cap = std::time::Instant::now() + Duration::from_millis(500);
            s.ctl.next_deadline().map_or(cap, |d| d.min(cap))
        };
        let out = tokio::select! {
            _ = stop.wait_for(|s| *s) => break,
            r = udp.recv_from(&mut buf) => match r {
                Ok((n, from)) => {
                    let mut s = lock(&state);
                    let out = s.ctl.handle_datagram(&buf[..n], from, Now::system());
                    s.persist();
                    out
                }
                Err(e) => {
                    tracing::debug!(%e, "udp receive error");
                    continue;
                }
            },
            _ = tokio::time::sleep_until(deadline.into()) => {
                let mut s = lock(&state);
                let out = s.ctl.poll(Now::system());
                s.persist();
                out
            }
        };
        for (to, bytes) in out {
            if let Err(e) = udp.send_to(&bytes, to).await {
                tracing::debug!(%to, %e, "udp send failed");
            }
        }
    }
    tracing::info!("controller datagram loop stopped");
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/ca", get(get_ca))
        .route("/peers", get(get_peers))
        .route("/peers/{role}", get(get_peer))
        .route("/certs/{serial}", get(get_cert))
        .route("/register", post(post_register))
        .route("/revoke", post(post_revoke))
        .route("/intents", get(get_intents))
        .route("/intents/{id}", get(get_intent))
        .route("/status", get(get_status))
        .with_state(state)
}

fn pki_status(e: &PkiError) -> StatusCode {
    match e {
        PkiError::UnknownRole(_) | PkiError::UnknownSerial(_) => StatusCode::NOT_FOUND,
        PkiError::Malformed(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::FORBIDDEN,
    }
}

async fn get_ca(State(s): State<AppState>) -> Json<RecordEnvelope> {
    Json(RecordEnvelope::new(&lock(&s).ctl.ca_public().0))
}

async fn get_peers(State(s): State<AppState>) -> Json<Vec<PeerView>> {
    let s = lock(&s);
    Json(
        s.ctl
            .peers()
            .into_iter()
            .map(|p| PeerView {
                role: p.certificate.subject_role,
                serial: p.certificate.serial,
                static_pub: p.certificate.subject_static_pub.to_hex(),
                not_before: p.certificate.not_before,
                not_after: p.certificate.not_after,
                revoked: p.revoked,
                connected: p.connected,
            })
            .collect(),
    )
}

async fn get_peer(State(s): State<AppState>, UrlPath(role): UrlPath<String>) -> Response {
    let role: StakeholderRole = match role.parse() {
        Ok(r) => r,
        Err(e) => return http_error(StatusCode::BAD_REQUEST, e),
    };
    let s = lock(&s);
    match s.ctl.registry().lookup_static_key(role) {
        Ok(c) => Json(RecordEnvelope::new(&c.encode())).into_response(),
        Err(e) => http_error(pki_status(&e), e),
    }
}

async fn get_cert(State(s): State<AppState>, UrlPath(serial): UrlPath<u64>) -> Response {
    let s = lock(&s);
    let reg = s.ctl.registry();
    match reg.certificate(serial) {
        Some(c) => Json(CertStatus {
            serial,
            role: c.subject_role,
            active: reg.lookup_static_key(c.subject_role).is_ok_and(|a| a.serial == serial),
            revoked: reg.is_revoked(serial),
        })
        .into_response(),
        None => http_error(StatusCode::NOT_FOUND, PkiError::UnknownSerial(serial)),
    }
}

async fn post_register(
    State(s): State<AppState>,
    axum::extract::ConnectInfo(peer): axum::extract::ConnectInfo<SocketAddr>,
    Json(env): Json<RecordEnvelope>,
) -> Response {
    let req = match env.bytes().and_then(|b| EnrollmentRequest::decode(&b)) {
        Ok(r) => r,
        Err(e) => return http_error(StatusCode::BAD_REQUEST, e),
    };
    let mut s = lock(&s);
    let result = s.ctl.enroll(&req, Now::system(), Some(peer));
    s.persist();
    match result {
        Ok(cert) => {
            tracing::info!(role = %cert.subject_role, serial = cert.serial, "certificate issued");
            Json(RecordEnvelope::new(&cert.encode())).into_response()
        }
        Err(e) => http_error(pki_status(&e), e),
    }
}

async fn post_revoke(State(s): State<AppState>, Json(env): Json<RecordEnvelope>) -> Response {
    let req = match env.bytes().and_then(|b| RevocationRequest::decode(&b)) {
        Ok(r) => r,
        Err(e) => return http_error(StatusCode::BAD_REQUEST, e),
    };
    let mut s = lock(&s);
    let result = s.ctl.revoke_request(&req, Now::system());
    s.persist();
    match result {
        Ok(()) => {
            tracing::info!(serial = req.serial, "certificate revoked");
            Json(RevokeResponse { serial: req.serial }).into_response()
        }
        Err(e) => http_error(pki_status(&e), e),
    }
}

async fn get_intents(State(s): State<AppState>) -> Json<Vec<IntentSummary>> {
    Json(lock(&s).ctl.store().iter().map(IntentSummary::from).collect())
}

async fn get_intent(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let id: IntentId = match id.parse() {
        Ok(i) => i,
        Err(e) => return http_error(StatusCode::BAD_REQUEST, e),
    };
    let s = lock(&s);
    let store = s.ctl.store();
    match store.get(&id) {
        Some(r) => Json(IntentView {
            record: r.clone(),
            lineage: store.lineage(&id).into_iter().map(IntentSummary::from).collect(),
            descendants: store.descendants(&id).into_iter().cloned().collect(),
        })
        .into_response(),
        None => http_error(StatusCode::NOT_FOUND, format!("unknown intent {id}")),
    }
}

async fn get_status(State(s): State<AppState>) -> Json<ControllerStatus> {
    let s = lock(&s);
    let now = Now::system();
    Json(ControllerStatus {
        stats: s.ctl.stats().clone(),
        sessions: s
            .ctl
            .session_summary(now)
            .into_iter()
            .map(|(role, index, confirmed, age)| SessionView { role, index, confirmed, age_ms: age.as_millis() })
            .collect(),
        parked: s.ctl.parked().count(),
        intents: s.ctl.store().len(),
    })
}
