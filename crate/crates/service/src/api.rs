//! REST routes under `/api/v1`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use insole_core::ingest::parse_batch;
use insole_core::model::FootSide;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crate::error::ApiError;
use crate::service::{Principal, RawSelection, Service, SessionQuery};

pub const BASE: &str = "/api/v1";
/// Large enough for a full batch of frames in JSON.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

type AppState = Arc<Service>;

impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, svc: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or(ApiError::Unauthorized)?;
        svc.authenticate(token.trim())
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

fn body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::Invalid(format!("bad request body: {e}")))
}

fn id(s: &str, what: &'static str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError::NotFound(what))
}

fn time(s: &Option<String>) -> Result<Option<DateTime<Utc>>, ApiError> {
    s.as_deref()
        .filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::Invalid(format!("bad timestamp {s}: {e}")))
        })
        .transpose()
}

fn created<T: Serialize>(v: T) -> Response {
    (StatusCode::CREATED, Json(v)).into_response()
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    credential: String,
}

async fn issue_token(State(svc): State<AppState>, raw: Bytes) -> Result<Response, ApiError> {
    let c: Credentials = body(&raw)?;
    let t = blocking(move || svc.issue_token(&c.username, &c.credential)).await?;
    Ok(Json(t).into_response())
}

async fn create_user(State(svc): State<AppState>, p: Principal, raw: Bytes) -> Result<Response, ApiError> {
    let req = body(&raw)?;
    Ok(created(blocking(move || svc.create_user(&p, req)).await?))
}

async fn list_users(State(svc): State<AppState>, p: Principal) -> Result<Response, ApiError> {
    Ok(Json(svc.list_users(&p)?).into_response())
}

async fn create_patient(State(svc): State<AppState>, p: Principal, raw: Bytes) -> Result<Response, ApiError> {
    let req = body(&raw)?;
    Ok(created(blocking(move || svc.create_patient(&p, req)).await?))
}

async fn list_patients(State(svc): State<AppState>, p: Principal) -> Result<Response, ApiError> {
    Ok(Json(svc.list_patients(&p)).into_response())
}

async fn create_pairing(State(svc): State<AppState>, p: Principal, raw: Bytes) -> Result<Response, ApiError> {
    let req = body(&raw)?;
    Ok(created(blocking(move || svc.create_pairing(&p, req)).await?))
}

#[derive(Deserialize)]
struct PatientFilter {
    patient: Option<String>,
}

async fn list_pairings(
    State(svc): State<AppState>,
    p: Principal,
    Query(q): Query<PatientFilter>,
) -> Result<Response, ApiError> {
    let patient = q.patient.as_deref().map(|s| id(s, "patient")).transpose()?;
    Ok(Json(svc.list_pairings(&p, patient)?).into_response())
}

async fn deactivate_pairing(
    State(svc): State<AppState>,
    p: Principal,
    Path(pairing): Path<String>,
) -> Result<Response, ApiError> {
    let pairing = id(&pairing, "pairing")?;
    Ok(Json(blocking(move || svc.deactivate_pairing(&p, pairing)).await?).into_response())
}

async fn create_session(State(svc): State<AppState>, p: Principal, raw: Bytes) -> Result<Response, ApiError> {
    let req = body(&raw)?;
    Ok(created(blocking(move || svc.create_session(&p, req)).await?))
}

#[derive(Deserialize)]
struct ListParams {
    patient: Option<String>,
    from: Option<String>,
    to: Option<String>,
    page: Option<String>,
}

async fn list_sessions(
    State(svc): State<AppState>,
    p: Principal,
    Query(q): Query<ListParams>,
) -> Result<Response, ApiError> {
    let query = SessionQuery {
        patient: q.patient.as_deref().map(|s| id(s, "patient")).transpose()?,
        from: time(&q.from)?,
        to: time(&q.to)?,
        page: match q.page.as_deref() {
            None | Some("") => 0,
            Some(x) => x.parse().map_err(|_| ApiError::Invalid(format!("bad page {x}")))?,
        },
    };
    Ok(Json(svc.list_sessions(&p, &query)?).into_response())
}

async fn get_session(State(svc): State<AppState>, p: Principal, Path(s): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(svc.get_session(&p, id(&s, "session")?)?).into_response())
}

async fn ingest(
    State(svc): State<AppState>,
    p: Principal,
    Path(s): Path<String>,
    raw: Bytes,
) -> Result<Response, ApiError> {
    let session = id(&s, "session")?;
    let r = blocking(move || {
        let frames = parse_batch(&raw).map_err(|e| ApiError::Invalid(format!("bad frame batch: {e}")))?;
        svc.ingest(&p, session, &frames)
    })
    .await?;
    Ok(Json(r).into_response())
}

async fn finalize(State(svc): State<AppState>, p: Principal, Path(s): Path<String>) -> Result<Response, ApiError> {
    let session = id(&s, "session")?;
    let r = blocking(move || svc.finalize(&p, session)).await?;
    Ok((StatusCode::ACCEPTED, Json(r)).into_response())
}

#[derive(Deserialize)]
struct ReportParams {
    foot: Option<String>,
    sensors: Option<String>,
}

async fn get_report(
    State(svc): State<AppState>,
    p: Principal,
    Path((s, kind)): Path<(String, String)>,
    Query(q): Query<ReportParams>,
) -> Result<Response, ApiError> {
    let session = id(&s, "session")?;
    let foot = q
        .foot
        .as_deref()
        .map(|f| FootSide::parse(f).ok_or_else(|| ApiError::Invalid(format!("unknown foot {f}"))))
        .transpose()?;
    let sensors = q
        .sensors
        .as_deref()
        .map(|list| {
            list.split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| x.trim().parse::<usize>().map_err(|_| ApiError::Invalid(format!("bad sensor index {x}"))))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let sel = RawSelection { foot, sensors };
    let bytes = blocking(move || svc.get_report(&p, session, &kind, &sel)).await?;
    Ok(([(CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn get_job(State(svc): State<AppState>, p: Principal, Path(j): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(svc.get_job(&p, id(&j, "job")?)?).into_response())
}

async fn fallback() -> ApiError {
    ApiError::NotFound("route")
}

pub fn router(svc: Arc<Service>) -> Router {
    let v1 = Router::new()
        .route("/healthz", get(healthz))
        .route("/auth/token", post(issue_token))
        .route("/users", post(create_user).get(list_users))
        .route("/patients", post(create_patient).get(list_patients))
        .route("/pairings", post(create_pairing).get(list_pairings))
        .route("/pairings/{id}/deactivate", post(deactivate_pairing))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/frames", post(ingest))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/reports/{kind}", get(get_report))
        .route("/jobs/{id}", get(get_job));
    Router::new()
        .route("/healthz", get(healthz))
        .nest(BASE, v1)
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(svc)
}
