//! HTTP/JSON routes.

use std::net::SocketAddr;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State as AxState};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use dcx_core::linetwin::{FaultKind, FaultSpec, PowerProfile};
use dcx_core::monitor::LossEvent;
use dcx_core::protocol::{SessionPolicy, State, Verdict};
use dcx_core::{LinkId, SiteId};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::coordinator::{Coordinator, ServiceError};
use crate::engine::{Engine, EngineError, Mutation, Outcome, SessionView};
use crate::log::EventRecord;
use crate::plots::{plot_table, PlotKind};

/// Header carrying the sequence number of the event a mutation produced.
pub const SEQ_HEADER: &str = "x-event-seq";

/// Default smallest step reported by the loss localizer, dB.
pub const DEFAULT_MIN_STEP_DB: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "invalid",
            message: message.into(),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match &e {
            EngineError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            EngineError::UnknownLink(_) => (StatusCode::NOT_FOUND, "unknown_link"),
            EngineError::UnknownFault(_) => (StatusCode::NOT_FOUND, "unknown_fault"),
            EngineError::UnknownCalibration(_) => (StatusCode::NOT_FOUND, "unknown_calibration"),
            EngineError::UnknownTarget(_) => (StatusCode::NOT_FOUND, "unknown_target"),
            EngineError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            EngineError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            EngineError::Inconsistent(_) => (StatusCode::INTERNAL_SERVER_ERROR, "inconsistent"),
        };
        Self {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Engine(e) => e.into(),
            other => Self {
                status: StatusCode::SERVICE_UNAVAILABLE,
                code: "unavailable",
                message: other.to_string(),
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_owned(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct AppState {
    coord: Coordinator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartSessionRequest {
    pub site_a: SiteId,
    pub site_b: SiteId,
    #[serde(default)]
    pub policy: SessionPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub verdict: Verdict,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultRequest {
    #[serde(flatten)]
    pub fault: FaultKind,
    pub magnitude_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkRequest {
    pub link_id: LinkId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaultCreated {
    pub fault_id: String,
}

/// Current profile of a link, with the stored baseline, their difference
/// and the loss events between them when a baseline exists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileView {
    pub link_id: LinkId,
    pub current: PowerProfile,
    pub baseline: Option<PowerProfile>,
    pub difference: Option<PowerProfile>,
    pub events: Vec<LossEvent>,
}

#[derive(Debug, Deserialize)]
struct SessionsQuery {
    state: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    since: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ProfileQuery {
    min_step_db: Option<f64>,
}

/// Parses a session state filter. `pending` is short for PendingApproval;
/// other names match case-insensitively with or without underscores.
pub fn parse_state(s: &str) -> Option<State> {
    const ALL: [State; 12] = [
        State::Idle,
        State::Registering,
        State::Authenticated,
        State::CatalogExchanged,
        State::Probing,
        State::QotEstimated,
        State::ModeSelected,
        State::Configured,
        State::PendingApproval,
        State::Committed,
        State::RolledBack,
        State::Errored,
    ];
    let norm = s.replace('_', "").to_ascii_lowercase();
    if norm == "pending" {
        return Some(State::PendingApproval);
    }
    ALL.into_iter().find(|st| format!("{st:?}").to_ascii_lowercase() == norm)
}

/// Runs `f` on the blocking pool against the latest snapshot.
async fn with_snapshot<T, F>(st: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> Result<T, EngineError> + Send + 'static,
{
    let snap = st.coord.snapshot();
    tokio::task::spawn_blocking(move || f(&snap))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: e.to_string(),
        })?
        .map_err(ApiError::from)
}

async fn mutate(st: &AppState, m: Mutation, status: StatusCode) -> ApiResult<Response> {
    let (out, rec) = st.coord.submit(m).await?;
    let body = match out {
        Outcome::Session(v) => Json(v).into_response(),
        Outcome::FaultInjected { fault_id } | Outcome::FaultCleared { fault_id } => {
            Json(FaultCreated { fault_id }).into_response()
        }
        Outcome::Calibrated(c) => Json(c).into_response(),
        Outcome::Optimized(o) => Json(o).into_response(),
        other => Json(other).into_response(),
    };
    let mut res = (status, body).into_response();
    res.headers_mut()
        .insert(SEQ_HEADER, HeaderValue::from_str(&rec.seq.to_string()).expect("digits"));
    Ok(res)
}

async fn health() -> &'static str {
    "ok"
}

async fn get_topology(AxState(st): AxState<AppState>) -> Response {
    let snap = st.coord.snapshot();
    Json(snap.topology.clone()).into_response()
}

async fn list_sessions(
    AxState(st): AxState<AppState>,
    Query(q): Query<SessionsQuery>,
) -> ApiResult<Json<Vec<SessionView>>> {
    let filter = match q.state.as_deref() {
        None => None,
        Some(s) => Some(parse_state(s).ok_or_else(|| ApiError::bad_request(format!("unknown state {s}")))?),
    };
    Ok(Json(st.coord.snapshot().sessions_in(filter)))
}

async fn start_session(
    AxState(st): AxState<AppState>,
    body: Result<Json<StartSessionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    let m = Mutation::StartSession {
        site_a: r.site_a,
        site_b: r.site_b,
        policy: r.policy,
    };
    mutate(&st, m, StatusCode::CREATED).await
}

async fn get_session(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let snap = st.coord.snapshot();
    Ok(Json(SessionView::new(snap.session(&id)?, true)))
}

async fn decide(
    AxState(st): AxState<AppState>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    let m = Mutation::Decide {
        session_id: id,
        verdict: r.verdict,
        reason: r.reason,
    };
    mutate(&st, m, StatusCode::OK).await
}

async fn what_if(
    AxState(st): AxState<AppState>,
    body: Result<Json<StartSessionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    let w = with_snapshot(&st, move |e| e.what_if(&r.site_a, &r.site_b, &r.policy)).await?;
    Ok(Json(w).into_response())
}

async fn link_profile(
    AxState(st): AxState<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProfileQuery>,
) -> ApiResult<Json<ProfileView>> {
    let min_step = q.min_step_db.unwrap_or(DEFAULT_MIN_STEP_DB);
    let v = with_snapshot(&st, move |e| {
        let current = e.profile(&id)?;
        let baseline = e.baselines.get(id.as_str()).cloned();
        let (difference, events) = match &baseline {
            Some(b) => (Some(current.difference(b)), e.localize(&id, min_step)?),
            None => (None, vec![]),
        };
        Ok(ProfileView {
            link_id: LinkId::from(id),
            current,
            baseline,
            difference,
            events,
        })
    })
    .await?;
    Ok(Json(v))
}

async fn link_events(
    AxState(st): AxState<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProfileQuery>,
) -> ApiResult<Json<Vec<LossEvent>>> {
    let min_step = q.min_step_db.unwrap_or(DEFAULT_MIN_STEP_DB);
    Ok(Json(with_snapshot(&st, move |e| e.localize(&id, min_step)).await?))
}

async fn capture_baseline(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    mutate(&st, Mutation::CaptureBaseline { link_id: id.into() }, StatusCode::CREATED).await
}

async fn link_gsnr(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let v = with_snapshot(&st, move |e| e.gsnr(&id)).await?;
    Ok(Json(v).into_response())
}

async fn list_faults(AxState(st): AxState<AppState>) -> Json<Vec<FaultSpec>> {
    Json(st.coord.snapshot().faults.active())
}

async fn inject_fault(
    AxState(st): AxState<AppState>,
    body: Result<Json<FaultRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    let m = Mutation::InjectFault {
        fault: r.fault,
        magnitude_db: r.magnitude_db,
    };
    mutate(&st, m, StatusCode::CREATED).await
}

async fn clear_fault(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    mutate(&st, Mutation::ClearFault { fault_id: id }, StatusCode::OK).await
}

async fn calibrate(
    AxState(st): AxState<AppState>,
    body: Result<Json<LinkRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    mutate(&st, Mutation::Calibrate { link_id: r.link_id }, StatusCode::CREATED).await
}

async fn get_calibration(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = st.coord.snapshot();
    Ok(Json(snap.calibration(&id)?).into_response())
}

async fn nf_check(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let r = with_snapshot(&st, move |e| e.nf_check(&id)).await?;
    Ok(Json(r).into_response())
}

async fn optimize(
    AxState(st): AxState<AppState>,
    body: Result<Json<LinkRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(r) = body?;
    mutate(&st, Mutation::Optimize { link_id: r.link_id }, StatusCode::CREATED).await
}

async fn get_optimization(AxState(st): AxState<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let snap = st.coord.snapshot();
    let o = snap
        .optimizations
        .get(&id)
        .ok_or_else(|| ApiError::from(EngineError::UnknownTarget(id.clone())))?;
    Ok(Json(o).into_response())
}

async fn events(AxState(st): AxState<AppState>, Query(q): Query<EventsQuery>) -> Json<Vec<EventRecord>> {
    Json(st.coord.events_since(q.since))
}

async fn plot(AxState(st): AxState<AppState>, Path((kind, target)): Path<(String, String)>) -> ApiResult<Response> {
    let kind: PlotKind = kind.parse()?;
    let csv = with_snapshot(&st, move |e| plot_table(e, kind, &target)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

/// The API router. Fault injection routes are left out unless `chaos`.
pub fn router(coord: Coordinator, chaos: bool) -> Router {
    let mut r = Router::new()
        .route("/health", get(health))
        .route("/topology", get(get_topology))
        .route("/sessions", get(list_sessions).post(start_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/decision", post(decide))
        .route("/what-if", post(what_if))
        .route("/links/{id}/profile", get(link_profile))
        .route("/links/{id}/baseline", post(capture_baseline))
        .route("/links/{id}/events", get(link_events))
        .route("/links/{id}/gsnr", get(link_gsnr))
        .route("/faults", get(list_faults))
        .route("/calibrations", post(calibrate))
        .route("/calibrations/{id}", get(get_calibration))
        .route("/calibrations/{id}/nf-check", get(nf_check))
        .route("/optimizations", post(optimize))
        .route("/optimizations/{id}", get(get_optimization))
        .route("/events", get(events))
        .route("/plots/{kind}/{target}", get(plot));
    if chaos {
        r = r
            .route("/faults", post(inject_fault))
            .route("/faults/{id}", delete(clear_fault));
    }
    r.with_state(AppState { coord })
}

/// A running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.unwrap_or(Ok(()))
    }

    /// Waits until the server exits on its own.
    pub async fn wait(self) -> std::io::Result<()> {
        let _keep = self.shutdown;
        self.task.await.unwrap_or(Ok(()))
    }
}

/// Binds `addr` and serves the API in the background.
pub async fn serve(coord: Coordinator, addr: SocketAddr, chaos: bool) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| ServeError::BindFailure { addr, source })?;
    let app = router(coord, chaos);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    tracing::info!(%addr, chaos, "serving");
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_filters() {
        assert_eq!(parse_state("pending"), Some(State::PendingApproval));
        assert_eq!(parse_state("PendingApproval"), Some(State::PendingApproval));
        assert_eq!(parse_state("rolled_back"), Some(State::RolledBack));
        assert_eq!(parse_state("nope"), None);
    }
}
