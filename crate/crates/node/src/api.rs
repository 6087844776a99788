//! JSON bodies of the controller's registry/query API and the peers' control
//! API, plus small async clients for both.

use std::time::Duration;

use ibn_core::intent::{Expectation, IntentId, IntentScope, LifecycleState};
use ibn_core::pki::{
    CaPublicKey, Certificate, EnrollmentRequest, RecordEnvelope, RevocationRequest, StakeholderRole,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentStatus;
use crate::controller::ControllerStats;
use crate::records::GlobalIntentRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerView {
    pub role: StakeholderRole,
    pub serial: u64,
    pub static_pub: String,
    pub not_before: u64,
    pub not_after: u64,
    pub revoked: bool,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertStatus {
    pub serial: u64,
    pub role: StakeholderRole,
    /// The role's current certificate is this one.
    pub active: bool,
    pub revoked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeResponse {
    pub serial: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSummary {
    pub id: IntentId,
    pub scope: IntentScope,
    pub owner: StakeholderRole,
    pub handler: StakeholderRole,
    pub parent_id: Option<IntentId>,
    pub state: LifecycleState,
}

impl From<&GlobalIntentRecord> for IntentSummary {
    fn from(r: &GlobalIntentRecord) -> Self {
        Self {
            id: r.intent.id,
            scope: r.intent.scope,
            owner: r.intent.owner,
            handler: r.intent.handler,
            parent_id: r.intent.parent_id,
            state: r.intent.state,
        }
    }
}

/// One intent with its ancestry (self first, root last) and every descendant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentView {
    pub record: GlobalIntentRecord,
    pub lineage: Vec<IntentSummary>,
    pub descendants: Vec<GlobalIntentRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub role: StakeholderRole,
    pub index: u32,
    pub confirmed: bool,
    pub age_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStatus {
    pub stats: ControllerStats,
    pub sessions: Vec<SessionView>,
    pub parked: usize,
    pub intents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub expectations: Vec<Expectation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub intent_id: IntentId,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{0} unreachable: {1}")]
    Unreachable(String, String),
    #[error("{status}: {message}")]
    Status { status: u16, message: String },
    #[error("bad response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            Self::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// Minimal JSON-over-HTTP client bound to one base address.
#[derive(Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(addr: impl std::fmt::Display) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(15))
            .connect_timeout(Duration::from_secs(2))
            .build()
            .expect("http client");
        Self { base: format!("http://{addr}"), http }
    }

    async fn decode<T: serde::de::DeserializeOwned>(&self, resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let body = resp.bytes().await.map_err(|e| ClientError::Decode(e.to_string()))?;
        if !status.is_success() {
            let message = serde_json::from_slice::<ErrorBody>(&body)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&body).into_owned());
            return Err(ClientError::Status { status: status.as_u16(), message });
        }
        serde_json::from_slice(&body).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn get<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self
            .http
            .get(format!("{}{path}", self.base))
            .send()
            .await
            .map_err(|e| ClientError::Unreachable(self.base.clone(), e.to_string()))?;
        self.decode(resp).await
    }

    pub async fn post<B: Serialize, T: serde::de::DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .await
            .map_err(|e| ClientError::Unreachable(self.base.clone(), e.to_string()))?;
        self.decode(resp).await
    }

    // ---- controller ----

    pub async fn ca(&self) -> Result<CaPublicKey, ClientError> {
        let env: RecordEnvelope = self.get("/ca").await?;
        let bytes = env.bytes().map_err(|e| ClientError::Decode(e.to_string()))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| ClientError::Decode("CA key length".into()))?;
        Ok(CaPublicKey(arr))
    }

    pub async fn peer_certificate(&self, role: StakeholderRole) -> Result<Certificate, ClientError> {
        let env: RecordEnvelope = self.get(&format!("/peers/{role}")).await?;
        let bytes = env.bytes().map_err(|e| ClientError::Decode(e.to_string()))?;
        Certificate::decode(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn peers(&self) -> Result<Vec<PeerView>, ClientError> {
        self.get("/peers").await
    }

    pub async fn cert_status(&self, serial: u64) -> Result<CertStatus, ClientError> {
        self.get(&format!("/certs/{serial}")).await
    }

    pub async fn register(&self, req: &EnrollmentRequest) -> Result<Certificate, ClientError> {
        let env: RecordEnvelope = self.post("/register", &RecordEnvelope::new(&req.encode())).await?;
        let bytes = env.bytes().map_err(|e| ClientError::Decode(e.to_string()))?;
        Certificate::decode(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn revoke(&self, req: &RevocationRequest) -> Result<RevokeResponse, ClientError> {
        self.post("/revoke", &RecordEnvelope::new(&req.encode())).await
    }

    pub async fn intents(&self) -> Result<Vec<IntentSummary>, ClientError> {
        self.get("/intents").await
    }

    pub async fn intent(&self, id: &IntentId) -> Result<IntentView, ClientError> {
        self.get(&format!("/intents/{id}")).await
    }

    pub async fn controller_status(&self) -> Result<ControllerStatus, ClientError> {
        self.get("/status").await
    }

    // ---- peer control ----

    pub async fn submit(&self, expectations: Vec<Expectation>) -> Result<SubmitResponse, ClientError> {
        self.post("/submit", &SubmitRequest { expectations }).await
    }

    pub async fn agent_status(&self) -> Result<AgentStatus, ClientError> {
        self.get("/status").await
    }
}
