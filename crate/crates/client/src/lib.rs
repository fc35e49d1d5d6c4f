//! Typed client for the DCX gateway HTTP/JSON API.

use dcx_core::linetwin::{FaultKind, FaultSpec, PowerProfile};
use dcx_core::monitor::{CalibrationResult, GainTiltSetting, LossEvent, NfFaultReport};
use dcx_core::protocol::{ErrorCode, SessionLogEntry, SessionPolicy, State, Verdict};
use dcx_core::{LinkId, SiteId, Topology};
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status} {error}: {message}")]
    Api {
        status: u16,
        error: String,
        message: String,
    },
}

impl ClientError {
    /// HTTP status of an API error.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status().map(|s| s.as_u16()),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub state: State,
    pub site_a: SiteId,
    pub site_b: SiteId,
    pub route_id: Option<String>,
    pub mode: Option<String>,
    pub channel: Option<usize>,
    pub e2e_gsnr_db: Option<f64>,
    pub error: Option<ErrorCode>,
    pub error_detail: Option<String>,
    pub log_len: usize,
    #[serde(default)]
    pub log: Vec<SessionLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOption {
    pub mode: String,
    pub predicted_snr_db: f64,
    pub required_snr_db: f64,
    pub margin_db: f64,
    pub rx_in_window: bool,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub session: SessionView,
    pub modes: Vec<ModeOption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileView {
    pub link_id: LinkId,
    pub current: PowerProfile,
    pub baseline: Option<PowerProfile>,
    pub difference: Option<PowerProfile>,
    pub events: Vec<LossEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGsnr {
    pub channel: usize,
    pub freq_thz: f64,
    pub gsnr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdfaGsnr {
    pub edfa_id: String,
    pub position_km: f64,
    pub gsnr_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGsnrView {
    pub link_id: LinkId,
    pub channels: Vec<ChannelGsnr>,
    pub per_edfa: Vec<EdfaGsnr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub calibration_id: String,
    pub link_id: LinkId,
    pub seq: u64,
    pub result: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub optimization_id: String,
    pub link_id: LinkId,
    pub calibration_id: String,
    pub result: GainTiltSetting,
}

/// Event log entry. The payload is left as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub kind: String,
    pub payload: Value,
    pub state_digest: String,
}

impl EventRecord {
    /// Payload `type`, e.g. `session_started`.
    pub fn event_type(&self) -> Option<&str> {
        self.payload.get("type").and_then(Value::as_str)
    }
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
    message: String,
}

#[derive(Debug, Deserialize)]
struct FaultId {
    fault_id: String,
}

#[derive(Debug, Clone)]
pub struct DcxClient {
    base: String,
    http: reqwest::Client,
}

impl DcxClient {
    /// Client for the gateway at `base`, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send(rb: RequestBuilder) -> Result<reqwest::Response> {
        let r = rb.send().await?;
        let status = r.status();
        if status.is_success() {
            return Ok(r);
        }
        let text = r.text().await.unwrap_or_default();
        let (error, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.message),
            Err(_) => (status.canonical_reason().unwrap_or("error").to_owned(), text),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            error,
            message,
        })
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        Ok(Self::send(rb).await?.json().await?)
    }

    pub async fn health(&self) -> Result<bool> {
        let r = Self::send(self.req(Method::GET, "/health")).await?;
        Ok(r.status() == StatusCode::OK)
    }

    pub async fn topology(&self) -> Result<Topology> {
        Self::json(self.req(Method::GET, "/topology")).await
    }

    pub async fn start_session(&self, site_a: &str, site_b: &str, policy: &SessionPolicy) -> Result<SessionView> {
        let body = json!({ "site_a": site_a, "site_b": site_b, "policy": policy });
        Self::json(self.req(Method::POST, "/sessions").json(&body)).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionView> {
        Self::json(self.req(Method::GET, &format!("/sessions/{id}"))).await
    }

    /// Sessions, optionally filtered by state name (`pending` works).
    pub async fn sessions(&self, state: Option<&str>) -> Result<Vec<SessionView>> {
        let mut rb = self.req(Method::GET, "/sessions");
        if let Some(s) = state {
            rb = rb.query(&[("state", s)]);
        }
        Self::json(rb).await
    }

    pub async fn decide(&self, id: &str, verdict: Verdict, reason: &str) -> Result<SessionView> {
        let body = json!({ "verdict": verdict, "reason": reason });
        Self::json(self.req(Method::POST, &format!("/sessions/{id}/decision")).json(&body)).await
    }

    pub async fn what_if(&self, site_a: &str, site_b: &str, policy: &SessionPolicy) -> Result<WhatIf> {
        let body = json!({ "site_a": site_a, "site_b": site_b, "policy": policy });
        Self::json(self.req(Method::POST, "/what-if").json(&body)).await
    }

    pub async fn profile(&self, link_id: &str) -> Result<ProfileView> {
        Self::json(self.req(Method::GET, &format!("/links/{link_id}/profile"))).await
    }

    pub async fn capture_baseline(&self, link_id: &str) -> Result<()> {
        Self::send(self.req(Method::POST, &format!("/links/{link_id}/baseline"))).await?;
        Ok(())
    }

    pub async fn loss_events(&self, link_id: &str, min_step_db: Option<f64>) -> Result<Vec<LossEvent>> {
        let mut rb = self.req(Method::GET, &format!("/links/{link_id}/events"));
        if let Some(m) = min_step_db {
            rb = rb.query(&[("min_step_db", m)]);
        }
        Self::json(rb).await
    }

    pub async fn gsnr(&self, link_id: &str) -> Result<LinkGsnrView> {
        Self::json(self.req(Method::GET, &format!("/links/{link_id}/gsnr"))).await
    }

    pub async fn faults(&self) -> Result<Vec<FaultSpec>> {
        Self::json(self.req(Method::GET, "/faults")).await
    }

    /// Injects a fault and returns its id.
    pub async fn inject_fault(&self, fault: &FaultKind, magnitude_db: f64) -> Result<String> {
        let mut body = serde_json::to_value(fault).expect("fault serializes");
        body["magnitude_db"] = json!(magnitude_db);
        let r: FaultId = Self::json(self.req(Method::POST, "/faults").json(&body)).await?;
        Ok(r.fault_id)
    }

    pub async fn clear_fault(&self, fault_id: &str) -> Result<()> {
        Self::send(self.req(Method::DELETE, &format!("/faults/{fault_id}"))).await?;
        Ok(())
    }

    pub async fn calibrate(&self, link_id: &str) -> Result<CalibrationRecord> {
        Self::json(self.req(Method::POST, "/calibrations").json(&json!({ "link_id": link_id }))).await
    }

    pub async fn calibration(&self, id: &str) -> Result<CalibrationRecord> {
        Self::json(self.req(Method::GET, &format!("/calibrations/{id}"))).await
    }

    pub async fn nf_check(&self, calibration_id: &str) -> Result<NfFaultReport> {
        Self::json(self.req(Method::GET, &format!("/calibrations/{calibration_id}/nf-check"))).await
    }

    pub async fn optimize(&self, link_id: &str) -> Result<OptimizationRecord> {
        Self::json(self.req(Method::POST, "/optimizations").json(&json!({ "link_id": link_id }))).await
    }

    pub async fn optimization(&self, id: &str) -> Result<OptimizationRecord> {
        Self::json(self.req(Method::GET, &format!("/optimizations/{id}"))).await
    }

    /// Events after `since`, or the whole log.
    pub async fn events(&self, since: Option<u64>) -> Result<Vec<EventRecord>> {
        let mut rb = self.req(Method::GET, "/events");
        if let Some(s) = since {
            rb = rb.query(&[("since", s)]);
        }
        Self::json(rb).await
    }

    /// CSV table of a plot.
    pub async fn plot(&self, kind: &str, target: &str) -> Result<String> {
        Ok(Self::send(self.req(Method::GET, &format!("/plots/{kind}/{target}")))
            .await?
            .text()
            .await?)
    }
}
