//! HTTP routes over [`Service`].
//!
//! Mutating routes require an `annotator_id` header. Errors are returned as
//! `{"code", "message", "row_ids"?}` with a status chosen from the code.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use taxon_core::search::SearchParams;
use taxon_core::session::{PlaybackKind, PresenceVerdict, Provenance};
use taxon_core::{RowId, TaskId};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::service::{Service, ServiceError};

pub const ANNOTATOR_HEADER: &str = "annotator_id";

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: String,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    row_ids: Option<Vec<RowId>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                row_ids: None,
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message)
    }
}

/// HTTP status for a service error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UnknownCategory" | "UnknownTask" | "UnknownSound" | "UnknownRow" => StatusCode::NOT_FOUND,
        "EmptyQuery" | "InvalidLimit" | "InvalidThreshold" | "InvalidDescriptionWeight"
        | "InvalidRequest" | "WrongTaskKind" => StatusCode::BAD_REQUEST,
        "TaskFinalized" | "NotAChild" | "NotASibling" | "DuplicateSelection" | "NotSelected"
        | "NothingToUndo" | "AbstractCategoryNotSelectable" | "TaskExists" | "TaxonomyInUse" => {
            StatusCode::CONFLICT
        }
        "EffortGateNotMet" | "SiblingExplorationDisabled" | "NotTaskOwner" => StatusCode::FORBIDDEN,
        "MissingVerdicts" | "EmptyProposalList" | "PositionOutOfRange" | "TaskNotSubmitted"
        | "InvalidSound" | "InvalidAnnotation" => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let code = e.code();
        let mut err = ApiError::new(status_for(code), code, e.to_string());
        err.body.row_ids = e.row_ids().map(<[RowId]>::to_vec);
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

type AppState = Arc<Service>;

fn annotator(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::UNAUTHORIZED,
                "MissingAnnotator",
                "the annotator_id header is required",
            )
        })
}

/// Builds the application router. Audio files are served from `audio_dir`
/// under `/audio/` when given.
pub fn router(service: Arc<Service>, audio_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/taxonomy/roots", get(roots))
        .route("/taxonomy/categories/{id}", get(category))
        .route("/search", get(search))
        .route("/tasks/generation", post(create_generation))
        .route("/tasks/refinement", post(create_refinement))
        .route("/tasks/{id}", get(task))
        .route("/tasks/{id}/labels", post(add_label))
        .route("/tasks/{id}/labels/{cid}", delete(remove_label))
        .route("/tasks/{id}/rows/{rid}/refine", post(refine))
        .route("/tasks/{id}/rows/{rid}/sibling", post(sibling))
        .route("/tasks/{id}/rows/{rid}/undo", post(undo))
        .route("/tasks/{id}/rows/{rid}/duplicate", post(duplicate))
        .route("/tasks/{id}/rows/{rid}/verdict", post(verdict))
        .route("/tasks/{id}/playback", post(playback))
        .route("/tasks/{id}/search", post(task_search))
        .route("/tasks/{id}/metadata-request", post(metadata_request))
        .route("/tasks/{id}/submit", post(submit))
        .route("/sounds/{id}", get(sound))
        .route("/export", get(export))
        .route("/stats", get(stats))
        .route("/assignments", get(assignments));
    if let Some(dir) = audio_dir {
        app = app.nest_service("/audio", ServeDir::new(dir));
    }
    app.layer(CorsLayer::permissive()).with_state(service)
}

async fn roots(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.roots())
}

async fn category(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl Serialize> {
    Ok(Json(s.category(&id)?))
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    q: String,
    limit: Option<usize>,
    threshold: Option<f64>,
}

impl SearchQuery {
    fn params(&self) -> SearchParams {
        let defaults = SearchParams::default();
        SearchParams {
            limit: self.limit.unwrap_or(defaults.limit),
            threshold: self.threshold.unwrap_or(defaults.threshold),
        }
    }
}

async fn search(State(s): State<AppState>, Query(q): Query<SearchQuery>) -> ApiResult<impl Serialize> {
    Ok(Json(s.search(&q.q, &q.params())?))
}

#[derive(Deserialize)]
struct NewTask {
    sound_id: String,
    #[serde(default)]
    proposals: Option<Vec<String>>,
}

async fn create_generation(
    State(s): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<NewTask>,
) -> Result<impl IntoResponse, ApiError> {
    let who = annotator(&headers)?;
    Ok((StatusCode::CREATED, Json(s.create_generation_task(&who, &body.sound_id)?)))
}

async fn create_refinement(
    State(s): State<AppState>,
    headers: HeaderMap,
    Json(body): Json<NewTask>,
) -> Result<impl IntoResponse, ApiError> {
    let who = annotator(&headers)?;
    Ok((
        StatusCode::CREATED,
        Json(s.create_refinement_task(&who, &body.sound_id, body.proposals)?),
    ))
}

async fn task(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl Serialize> {
    Ok(Json(s.task(&id)?))
}

#[derive(Deserialize)]
struct LabelBody {
    category_id: String,
}

async fn add_label(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<LabelBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.add_label(&who, &id, &body.category_id)?))
}

async fn remove_label(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, cid)): Path<(String, String)>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.remove_label(&who, &id, &cid)?))
}

#[derive(Deserialize)]
struct TargetBody {
    category_id: String,
}

async fn refine(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
    Json(body): Json<TargetBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.refine_to_child(&who, &id, &rid, &body.category_id)?))
}

async fn sibling(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
    Json(body): Json<TargetBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.move_to_sibling(&who, &id, &rid, &body.category_id)?))
}

async fn undo(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.undo_move(&who, &id, &rid)?))
}

async fn duplicate(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.duplicate_row(&who, &id, &rid)?))
}

#[derive(Deserialize)]
struct VerdictBody {
    verdict: PresenceVerdict,
}

async fn verdict(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path((id, rid)): Path<(String, String)>,
    Json(body): Json<VerdictBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.set_presence(&who, &id, &rid, body.verdict)?))
}

#[derive(Deserialize)]
struct PlaybackBody {
    kind: PlaybackKind,
    position_s: f64,
}

async fn playback(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<PlaybackBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.record_playback(&who, &id, body.kind, body.position_s)?))
}

#[derive(Deserialize)]
struct TaskSearchBody {
    q: String,
    limit: Option<usize>,
    threshold: Option<f64>,
}

async fn task_search(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Json(body): Json<TaskSearchBody>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    let params = SearchQuery {
        q: String::new(),
        limit: body.limit,
        threshold: body.threshold,
    }
    .params();
    Ok(Json(s.task_search(&who, &id, &body.q, &params)?))
}

async fn metadata_request(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.request_metadata(&who, &id)?))
}

async fn submit(
    State(s): State<AppState>,
    headers: HeaderMap,
    Path(id): Path<String>,
) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.submit(&who, &id)?))
}

#[derive(Deserialize)]
struct SoundQuery {
    #[serde(default)]
    include_metadata: bool,
    task_id: Option<String>,
}

async fn sound(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SoundQuery>,
) -> ApiResult<impl Serialize> {
    Ok(Json(s.sound(&id, q.include_metadata, q.task_id.as_deref())?))
}

#[derive(Deserialize)]
struct ExportQuery {
    provenance: Option<String>,
}

/// Parses a comma-separated provenance list. Empty or absent means all.
pub fn parse_provenances(raw: Option<&str>) -> Result<BTreeSet<Provenance>, String> {
    let raw = raw.map(str::trim).unwrap_or("");
    if raw.is_empty() {
        return Ok(crate::store::all_provenances());
    }
    raw.split(',')
        .map(|p| {
            let p = p.trim();
            Provenance::parse(p).ok_or_else(|| format!("unknown provenance {p:?}"))
        })
        .collect()
}

async fn export(State(s): State<AppState>, Query(q): Query<ExportQuery>) -> Result<Response, ApiError> {
    let filter = parse_provenances(q.provenance.as_deref()).map_err(ApiError::bad_request)?;
    Ok((
        [(axum::http::header::CONTENT_TYPE, "application/x-ndjson")],
        s.export(&filter),
    )
        .into_response())
}

#[derive(Deserialize)]
struct StatsQuery {
    task_ids: Option<String>,
}

async fn stats(State(s): State<AppState>, Query(q): Query<StatsQuery>) -> ApiResult<impl Serialize> {
    let ids = q
        .task_ids
        .as_deref()
        .filter(|raw| !raw.trim().is_empty())
        .map(|raw| {
            raw.split(',')
                .map(|id| TaskId::new(id.trim()).map_err(|_| ApiError::bad_request("empty task id")))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    Ok(Json(s.stats(ids.as_deref())?))
}

async fn assignments(State(s): State<AppState>, headers: HeaderMap) -> ApiResult<impl Serialize> {
    let who = annotator(&headers)?;
    Ok(Json(s.assignments(&who)))
}
