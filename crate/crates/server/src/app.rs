//! Shared state and HTTP handlers.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde_json::json;

use ans_core::admission::{schema_check, validate_manifest_timed, AdmissionDecision};
use ans_core::attestation::{verify, AttestationError, CapabilityProof, Challenge, ChallengeStore};
use ans_core::identity::{unix_now, Timestamp, TrustAnchors};
use ans_core::policy::{explain, Policy};
use ans_core::registry::{AgentRecord, LifecycleRequest, RecordStatus, RegistrationRequest, Registry, RegistryError, StageTimings};
use ans_core::wire::{ApiError, AttestResponse, ChallengeRequest, ResolveParams, RevokeResponse};
use ans_core::{AgentManifest, ErrorCode};

use crate::alerts::{evaluate_alerts, Alert, AlertConfig};
use crate::metrics::{Counter, Metrics, MetricsSnapshot, Operation};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(unix_now)
}

/// Everything a handler needs. Cheap to clone.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    registry: Arc<Registry>,
    policies: Vec<Policy>,
    anchors: TrustAnchors,
    challenges: ChallengeStore,
    metrics: Metrics,
    alerts: AlertConfig,
    clock: Clock,
}

impl AppState {
    pub fn new(
        registry: Arc<Registry>,
        policies: Vec<Policy>,
        anchors: TrustAnchors,
        challenges: ChallengeStore,
        alerts: AlertConfig,
        clock: Clock,
    ) -> Self {
        AppState {
            inner: Arc::new(Inner { registry, policies, anchors, challenges, metrics: Metrics::default(), alerts, clock }),
        }
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.inner.registry
    }

    pub fn metrics(&self) -> &Metrics {
        &self.inner.metrics
    }

    pub fn policies(&self) -> &[Policy] {
        &self.inner.policies
    }

    pub fn anchors(&self) -> &TrustAnchors {
        &self.inner.anchors
    }

    pub fn challenges(&self) -> &ChallengeStore {
        &self.inner.challenges
    }

    pub fn now(&self) -> Timestamp {
        (self.inner.clock)()
    }

    pub fn metrics_snapshot(&self) -> MetricsSnapshot {
        let now = self.now();
        let records = self.inner.registry.live_records(now);
        let store = &self.inner.challenges;
        let utilization = store.len() as f64 / store.capacity() as f64;
        self.inner.metrics.snapshot(&records, now, self.inner.alerts.cert_expiry_warning_seconds, utilization)
    }

    pub fn alerts(&self) -> Vec<Alert> {
        let now = self.now();
        let records = self.inner.registry.live_records(now);
        evaluate_alerts(&self.metrics_snapshot(), &records, &self.inner.alerts, now)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/metrics", get(metrics))
        .route("/v1/agents", post(register))
        .route("/v1/agents/:name/renew", post(renew))
        .route("/v1/agents/:name", delete(revoke))
        .route("/v1/resolve", get(resolve))
        .route("/v1/challenge", post(challenge))
        .route("/v1/attest", post(attest))
        .route("/v1/admission/validate", post(admission))
        .with_state(state)
}

/// An [`ApiError`] rendered with its mapped status.
pub struct Failure(pub ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure(e)
    }
}

impl From<RegistryError> for Failure {
    fn from(e: RegistryError) -> Self {
        let api = ApiError::new(e.code(), e.to_string());
        Failure(match &e {
            RegistryError::PolicyDenied(decision) => {
                api.with_details(json!({ "explain": explain(decision), "decision": decision }))
            }
            _ => api,
        })
    }
}

impl From<AttestationError> for Failure {
    fn from(e: AttestationError) -> Self {
        Failure(ApiError::new(e.code(), e.to_string()))
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, Failure> {
    payload.map(|Json(v)| v).map_err(|e| Failure(ApiError::new(ErrorCode::Malformed, e.body_text())))
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure(ApiError::new(ErrorCode::Internal, e.to_string()))
}

async fn healthz() -> &'static str {
    "ok"
}

async fn metrics(State(state): State<AppState>) -> Response {
    let text = state.metrics_snapshot().render(&state.alerts());
    ([(header::CONTENT_TYPE, "text/plain; version=0.0.4")], text).into_response()
}

async fn register(
    State(state): State<AppState>,
    payload: Result<Json<RegistrationRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<AgentRecord>), Failure> {
    let req = body(payload)?;
    let started = Instant::now();
    let st = state.clone();
    let (result, timings) = tokio::task::spawn_blocking(move || {
        let mut timings = StageTimings::default();
        let now = st.now();
        let result = st.inner.registry.register_timed(&req, &st.inner.policies, &st.inner.anchors, now, &mut timings);
        (result, timings)
    })
    .await
    .map_err(internal)?;
    let m = &state.inner.metrics;
    m.observe(Operation::Registration, started.elapsed());
    if let Some(d) = timings.chain_validation {
        m.observe(Operation::ChainValidation, d);
    }
    if let Some(d) = timings.policy_eval {
        m.observe(Operation::PolicyEval, d);
    }
    match result {
        Ok(record) => {
            m.incr(Counter::RegistrationsTotal);
            Ok((StatusCode::CREATED, Json(record)))
        }
        Err(e) => {
            if matches!(e, RegistryError::PolicyDenied(_)) {
                m.incr(Counter::PolicyViolationsTotal);
            }
            Err(e.into())
        }
    }
}

async fn renew(
    State(state): State<AppState>,
    Path(name): Path<String>,
    payload: Result<Json<LifecycleRequest>, JsonRejection>,
) -> Result<Json<AgentRecord>, Failure> {
    let req = body(payload)?;
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || st.inner.registry.renew(&name, &req, st.now()))
        .await
        .map_err(internal)?;
    Ok(Json(result?))
}

async fn revoke(
    State(state): State<AppState>,
    Path(name): Path<String>,
    payload: Result<Json<LifecycleRequest>, JsonRejection>,
) -> Result<Json<RevokeResponse>, Failure> {
    let req = body(payload)?;
    let st = state.clone();
    let result = tokio::task::spawn_blocking(move || st.inner.registry.revoke(&name, &req, st.now()))
        .await
        .map_err(internal)?;
    let r = result?;
    Ok(Json(RevokeResponse { name: r.name, revoked_at: r.revoked_at, by: r.by }))
}

async fn resolve(
    State(state): State<AppState>,
    params: Result<Query<BTreeMap<String, String>>, QueryRejection>,
) -> Result<Json<Vec<AgentRecord>>, Failure> {
    let Query(pairs) = params.map_err(|e| Failure(ApiError::new(ErrorCode::Malformed, e.body_text())))?;
    let query = ResolveParams::from_pairs(&pairs)?.to_query()?;
    let started = Instant::now();
    let records = state.inner.registry.resolve(&query, &state.inner.policies, state.now());
    state.inner.metrics.observe(Operation::Discovery, started.elapsed());
    state.inner.metrics.incr(Counter::DiscoveryQueriesTotal);
    Ok(Json(records))
}

fn live_record(state: &AppState, name: &str, now: Timestamp) -> Result<AgentRecord, Failure> {
    match state.inner.registry.get(name) {
        Some(r) if r.status == RecordStatus::Revoked => {
            Err(Failure(ApiError::new(ErrorCode::Revoked, format!("agent {name} is revoked"))))
        }
        Some(r) if r.is_live(now) => Ok(r),
        _ => Err(Failure(ApiError::new(ErrorCode::UnknownAgent, format!("unknown agent {name}")))),
    }
}

async fn challenge(
    State(state): State<AppState>,
    payload: Result<Json<ChallengeRequest>, JsonRejection>,
) -> Result<Json<Challenge>, Failure> {
    let req = body(payload)?;
    let now = state.now();
    let record = live_record(&state, &req.agent_name.to_string(), now)?;
    Ok(Json(state.inner.challenges.issue(record.name, now)))
}

async fn attest(
    State(state): State<AppState>,
    payload: Result<Json<CapabilityProof>, JsonRejection>,
) -> Result<Json<AttestResponse>, Failure> {
    let proof = body(payload)?;
    let started = Instant::now();
    let m = &state.inner.metrics;
    m.incr(Counter::AttestationsTotal);
    let result = attest_inner(&state, &proof);
    m.observe(Operation::Attestation, started.elapsed());
    if result.is_err() {
        m.incr(Counter::AuthFailuresTotal);
    }
    result?;
    Ok(Json(AttestResponse { granted: true, agent_name: proof.agent_name, capability: proof.capability }))
}

fn attest_inner(state: &AppState, proof: &CapabilityProof) -> Result<(), Failure> {
    let now = state.now();
    let record = live_record(state, &proof.agent_name.to_string(), now)?;
    let commitment = record.commitments.iter().find(|c| c.capability == proof.capability).ok_or_else(|| {
        Failure(ApiError::new(
            ErrorCode::CapabilityMismatch,
            format!("{} holds no commitment for `{}`", record.name, proof.capability),
        ))
    })?;
    verify(proof, commitment, &record.chain, &state.inner.anchors, &state.inner.challenges, now)?;
    Ok(())
}

async fn admission(
    State(state): State<AppState>,
    payload: Result<Json<AgentManifest>, JsonRejection>,
) -> Result<Json<AdmissionDecision>, Failure> {
    let manifest = body(payload)?;
    if let Err(violations) = schema_check(&manifest) {
        let message = violations.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ");
        return Err(Failure(ApiError::new(ErrorCode::Malformed, message).with_details(json!({ "violations": violations }))));
    }
    let mut timings = StageTimings::default();
    let decision = validate_manifest_timed(&manifest, &state.inner.policies, &state.inner.anchors, state.now(), &mut timings);
    let m = &state.inner.metrics;
    if let Some(d) = timings.chain_validation {
        m.observe(Operation::ChainValidation, d);
    }
    if let Some(d) = timings.policy_eval {
        m.observe(Operation::PolicyEval, d);
    }
    if !decision.allowed {
        m.incr(Counter::PolicyViolationsTotal);
    }
    Ok(Json(decision))
}
