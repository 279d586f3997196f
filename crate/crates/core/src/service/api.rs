use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;
use tracing::{error, info};

use super::chat::{chat_answer, ChatTurn, Role};
use super::jobs::{new_job_id, AnalysisJob, JobStatus};
use super::AppState;
use crate::analysis::{analyze_report, DisclosureStatus};
use crate::catalog::CatalogError;
use crate::ingest::{IngestOptions, ReportFormat};
use crate::Error;

/// JSON error body `{code, message}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match &e {
            Error::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            Error::Ingest(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_report", e.to_string()),
            Error::Catalog(CatalogError::UnknownSlug { .. }) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_slug", e.to_string())
            }
            Error::Invalid(_) | Error::Config(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string())
            }
            Error::Gateway(_) => ApiError::new(StatusCode::BAD_GATEWAY, "model_unavailable", e.to_string()),
            _ => {
                error!(error = %e, "internal error");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            }
        }
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/catalog", get(get_catalog))
        .route("/reports", post(post_report))
        .route("/reports/{id}", get(get_report))
        .route("/reports/{id}/pages/{n}", get(get_page))
        .route("/analyses", post(post_analysis).get(list_analyses))
        .route("/analyses/{id}", get(get_analysis))
        .route("/analyses/{id}/results", get(get_results))
        .route("/analyses/{id}/summary", get(get_summary))
        .route("/chat", post(post_chat))
        .route("/chat/{session_id}", get(get_transcript));
    if let Some(dir) = &state.config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state)
}

async fn get_catalog(State(state): State<Arc<AppState>>) -> Response {
    (
        [(header::CONTENT_TYPE, "application/json")],
        state.catalog.to_json(),
    )
        .into_response()
}

struct Upload {
    bytes: Vec<u8>,
    format: ReportFormat,
    options: IngestOptions,
}

async fn read_upload(req: Request, state: &Arc<AppState>) -> Result<Upload, ApiError> {
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_ascii_lowercase();
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_report", m);
    if content_type.starts_with("multipart/form-data") {
        let mut multipart = Multipart::from_request(req, state).await.map_err(|e| bad(e.body_text()))?;
        let mut upload = Upload {
            bytes: Vec::new(),
            format: ReportFormat::Pagestream,
            options: IngestOptions::default(),
        };
        let mut format_field = None;
        let mut file_name = None;
        while let Some(field) = multipart.next_field().await.map_err(|e| bad(e.body_text()))? {
            let name = field.name().unwrap_or("").to_string();
            if name == "file" {
                file_name = field.file_name().map(str::to_string);
                upload.bytes = field.bytes().await.map_err(|e| bad(e.body_text()))?.to_vec();
            } else {
                let value = field.text().await.map_err(|e| bad(e.body_text()))?;
                match name.as_str() {
                    "format" => format_field = Some(value),
                    "company" => upload.options.company = Some(value),
                    "title" => upload.options.title = Some(value),
                    _ => {}
                }
            }
        }
        if upload.bytes.is_empty() {
            return Err(bad("multipart upload lacks a non-empty \"file\" field".into()));
        }
        upload.format = match (format_field, file_name) {
            (Some(f), _) => f.parse().map_err(|e: crate::ingest::IngestError| bad(e.to_string()))?,
            (None, Some(n)) => ReportFormat::from_path(std::path::Path::new(&n)),
            (None, None) if upload.bytes.starts_with(b"%PDF-") => ReportFormat::Pdf,
            (None, None) => ReportFormat::Pagestream,
        };
        return Ok(upload);
    }
    let format = if content_type.starts_with("application/pdf") {
        ReportFormat::Pdf
    } else {
        ReportFormat::Pagestream
    };
    let bytes = axum::body::to_bytes(req.into_body(), 64 * 1024 * 1024)
        .await
        .map_err(|e| bad(e.to_string()))?;
    Ok(Upload {
        bytes: bytes.to_vec(),
        format,
        options: IngestOptions::default(),
    })
}

async fn post_report(State(state): State<Arc<AppState>>, req: Request) -> Result<Response, ApiError> {
    let upload = read_upload(req, &state).await?;
    let st = state.clone();
    let outcome = blocking(move || {
        st.store.ingest_bytes(
            &upload.bytes,
            upload.format,
            &upload.options,
            st.pdf.as_ref(),
            st.gateway.as_ref(),
            &st.cache,
        )
    })
    .await?;
    info!(report_id = %outcome.report_id, reused = outcome.already_present, "report ingested");
    Ok(Json(outcome).into_response())
}

async fn get_report(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let st = state.clone();
    blocking(move || {
        let doc = st.store.load_report(&id)?;
        let indexes = st.store.load_indexes(&id)?;
        Ok(Json(json!({
            "report_id": doc.report_id,
            "company": doc.company,
            "title": doc.title,
            "format": doc.format,
            "ingested_at": doc.ingested_at,
            "page_count": doc.pages.len(),
            "segment_count": indexes.segments.len(),
        })))
    })
    .await
}

async fn get_page(State(state): State<Arc<AppState>>, Path((id, n)): Path<(String, u32)>) -> Result<Json<Value>, ApiError> {
    let st = state.clone();
    blocking(move || {
        let doc = st.store.load_report(&id)?;
        let page = doc
            .page(n)
            .ok_or_else(|| Error::NotFound(format!("page {n} of report {id} (pages 1–{})", doc.pages.len())))?;
        let indexes = st.store.load_indexes(&id)?;
        let segments: Vec<_> = indexes.segments.iter().filter(|s| s.covers_page(n)).collect();
        Ok(Json(json!({
            "report_id": id,
            "number": n,
            "page_count": doc.pages.len(),
            "text": page.text,
            "segments": segments,
        })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisRequest {
    report_id: String,
    slugs: Vec<String>,
    #[serde(default)]
    config: BTreeMap<String, Value>,
}

const OVERRIDABLE: [&str; 2] = ["retrieval.", "analysis."];

async fn post_analysis(
    State(state): State<Arc<AppState>>,
    body: Result<Json<AnalysisRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = json_body(body)?;
    if !state.store.has_report(&req.report_id) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("report {}", req.report_id)));
    }
    if req.slugs.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", "slugs must not be empty"));
    }
    for slug in &req.slugs {
        state.catalog.sub_industry(slug).map_err(Error::from)?;
    }
    let mut overrides = Vec::new();
    let mut probe = state.config.clone();
    for (key, value) in req.config {
        if !OVERRIDABLE.iter().any(|p| key.starts_with(p)) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_request",
                format!("config key {key:?} cannot be overridden per analysis"),
            ));
        }
        let value = match value {
            Value::String(s) => s,
            other => other.to_string(),
        };
        probe.set(&key, &value, std::path::Path::new(".")).map_err(Error::from)?;
        overrides.push((key, value));
    }
    probe.validate().map_err(Error::from)?;

    let job = state.jobs.create(&req.report_id, req.slugs, overrides).map_err(ApiError::from)?;
    submit(state.clone(), job.clone());
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": job.job_id, "status": job.status}))).into_response())
}

/// Queue a job on the worker pool.
pub fn submit(state: Arc<AppState>, job: AnalysisJob) {
    tokio::spawn(async move {
        let _permit = state.job_slots.clone().acquire_owned().await;
        if let Err(e) = state.jobs.transition(&job.job_id, JobStatus::Running, None) {
            error!(job_id = %job.job_id, error = %e, "cannot start job");
            return;
        }
        let st = state.clone();
        let j = job.clone();
        let outcome = tokio::task::spawn_blocking(move || run_job(&st, &j)).await;
        let result = match outcome {
            Ok(r) => r,
            Err(e) => Err(Error::Invalid(format!("analysis worker crashed: {e}"))),
        };
        let transition = match result {
            Ok(()) => state.jobs.transition(&job.job_id, JobStatus::Done, None),
            Err(e) => state.jobs.transition(&job.job_id, JobStatus::Failed, Some(e.to_string())),
        };
        if let Err(e) = transition {
            error!(job_id = %job.job_id, error = %e, "cannot finish job");
        }
    });
}

fn run_job(state: &AppState, job: &AnalysisJob) -> Result<(), Error> {
    let mut cfg = state.config.clone();
    for (k, v) in &job.overrides {
        cfg.set(k, v, std::path::Path::new("."))?;
    }
    let doc = state.store.load_report(&job.report_id)?;
    let indexes = state.store.load_indexes(&job.report_id)?;
    let results = analyze_report(
        &state.catalog,
        &job.slugs,
        &doc.company,
        &indexes,
        state.gateway.as_ref(),
        &cfg.analysis,
    )?;
    state.store.save_results(&job.job_id, &results)?;
    info!(job_id = %job.job_id, runtime_ms = results.runtime_ms, "analysis finished");
    Ok(())
}

fn find_job(state: &AppState, id: &str) -> Result<AnalysisJob, ApiError> {
    state
        .jobs
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("job {id}")))
}

async fn list_analyses(State(state): State<Arc<AppState>>) -> Json<Vec<AnalysisJob>> {
    Json(state.jobs.list())
}

async fn get_analysis(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<AnalysisJob>, ApiError> {
    find_job(&state, &id).map(Json)
}

fn require_done(job: &AnalysisJob) -> Result<(), ApiError> {
    match job.status {
        JobStatus::Done => Ok(()),
        JobStatus::Failed => Err(ApiError::new(
            StatusCode::CONFLICT,
            "job_failed",
            format!("job {} failed: {}", job.job_id, job.error.clone().unwrap_or_default()),
        )),
        other => Err(ApiError::new(
            StatusCode::CONFLICT,
            "not_ready",
            format!("job {} is {:?}; results are available once it is done", job.job_id, other).to_lowercase(),
        )),
    }
}

async fn get_results(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = find_job(&state, &id)?;
    require_done(&job)?;
    let path = state.store.results_path(&job.job_id);
    let raw = tokio::fs::read(&path).await.map_err(|e| ApiError::from(Error::io(&path, e)))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], raw).into_response())
}

fn counts_json(counts: [(DisclosureStatus, usize); 3]) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("total".into(), json!(counts.iter().map(|c| c.1).sum::<usize>()));
    for (s, n) in counts {
        m.insert(s.as_str().into(), json!(n));
    }
    m
}

async fn get_summary(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let job = find_job(&state, &id)?;
    require_done(&job)?;
    let st = state.clone();
    blocking(move || {
        let results = st.store.load_results(&job.job_id)?;
        let mut body = counts_json(results.status_counts(None));
        body.insert("job_id".into(), json!(job.job_id));
        body.insert("report_id".into(), json!(results.report_id));
        let per_slug: Vec<Value> = results
            .sub_industries
            .iter()
            .map(|s| {
                let mut m = counts_json(results.status_counts(Some(&s.slug)));
                m.insert("slug".into(), json!(s.slug));
                Value::Object(m)
            })
            .collect();
        body.insert("sub_industries".into(), json!(per_slug));
        Ok(Json(Value::Object(body)))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    #[serde(default)]
    session_id: Option<String>,
    report_id: String,
    #[serde(default)]
    job_id: Option<String>,
    message: String,
}

async fn post_chat(
    State(state): State<Arc<AppState>>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatTurn>, ApiError> {
    let req = json_body(body)?;
    if req.message.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", "message must not be empty"));
    }
    if !state.store.has_report(&req.report_id) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("report {}", req.report_id)));
    }
    let results_job = match &req.job_id {
        Some(id) => {
            let job = find_job(&state, id)?;
            if job.report_id != req.report_id {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_request",
                    format!("job {id} analyzed a different report"),
                ));
            }
            (job.status == JobStatus::Done).then_some(job.job_id)
        }
        None => None,
    };
    let session_id = req.session_id.clone().unwrap_or_else(new_job_id);
    let st = state.clone();
    let message = req.message.clone();
    let report_id = req.report_id.clone();
    let answer = blocking(move || {
        let indexes = st.store.load_indexes(&report_id)?;
        let results = match results_job {
            Some(id) => Some(st.store.load_results(&id)?),
            None => None,
        };
        Ok(chat_answer(
            &message,
            &st.catalog,
            &indexes,
            results.as_ref(),
            st.gateway.as_ref(),
            &st.config.analysis.retrieval,
        )?)
    })
    .await?;
    state.sessions.push(ChatTurn {
        session_id: session_id.clone(),
        role: Role::User,
        text: req.message,
        citations: Vec::new(),
    });
    let turn = ChatTurn {
        session_id,
        role: Role::Assistant,
        text: answer.text,
        citations: answer.citations,
    };
    state.sessions.push(turn.clone());
    Ok(Json(turn))
}

async fn get_transcript(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<ChatTurn>>, ApiError> {
    state
        .sessions
        .transcript(&id)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("chat session {id}")))
}
