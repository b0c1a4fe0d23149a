//! HTTP API under `/api/v1`.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | GET | `/health` | `{"status":"ok"}` |
//! | GET | `/datasets` | catalog, sorted by label |
//! | POST | `/datasets` | multipart upload, `202` with a job id |
//! | GET | `/jobs/{job}` | bundling progress and final dataset id |
//! | GET | `/datasets/{id}` | metadata, location labels, warnings |
//! | DELETE | `/datasets/{id}` | `204` |
//! | GET | `/datasets/{id}/{endpoint}` | a query, see [`crate::service`] |
//!
//! Pixel queries also answer `Accept: application/octet-stream` with
//! little-endian `f32` data. Every pixel response carries `X-Rendered-T0`,
//! `X-Rendered-T1` and `X-Rendered-Width` headers.
//!
//! A client may tag a request with `view=<name>&generation=<n>`. A newer
//! generation for the same dataset and view cancels the older request,
//! which then fails with `409 SUPERSEDED`.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query as QueryParams, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use tower_http::cors::{Any, CorsLayer};
use tracescope_core::query::Cancel;
use tracescope_core::{BuildOptions, Warning};

use crate::error::{ApiError, ErrorKind};
use crate::service::{execute, Answer, Params, Query};
use crate::store::{dataset_id_of, Store};

const RENDERED_T0: &str = "x-rendered-t0";
const RENDERED_T1: &str = "x-rendered-t1";
const RENDERED_WIDTH: &str = "x-rendered-width";
const UPLOAD_LIMIT: usize = 1 << 30;

/// Server-wide defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApiConfig {
    pub build: BuildOptions,
    pub overdraw: f64,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            build: BuildOptions::default(),
            overdraw: crate::service::DEFAULT_OVERDRAW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobError {
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub job_id: String,
    pub status: JobStatus,
    pub dataset_id: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cached: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warnings: Option<Vec<Warning>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
}

/// Latest generation per `(dataset, view)` and its cancellation flag.
type ViewTable = HashMap<(String, String), (u64, Arc<AtomicBool>)>;

pub struct AppState {
    pub store: Arc<Store>,
    pub config: ApiConfig,
    jobs: Mutex<HashMap<String, Job>>,
    bundling: Mutex<HashSet<String>>,
    views: Mutex<ViewTable>,
    next_job: AtomicU64,
}

impl AppState {
    pub fn new(store: Arc<Store>, config: ApiConfig) -> Arc<Self> {
        Arc::new(AppState {
            store,
            config,
            jobs: Mutex::new(HashMap::new()),
            bundling: Mutex::new(HashSet::new()),
            views: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
        })
    }

    fn check_ready(&self, id: &str) -> Result<(), ApiError> {
        if self.bundling.lock().expect("bundling set poisoned").contains(id) {
            return Err(ApiError::new(
                ErrorKind::Conflict,
                "DATASET_BUNDLING",
                format!("dataset {id} is still being bundled"),
            ));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    details: &'a [String],
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
                details: &self.details,
            },
        };
        (status, Json(body)).into_response()
    }
}

/// The `/api/v1` router with CORS enabled for any origin.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([
            HeaderName::from_static(RENDERED_T0),
            HeaderName::from_static(RENDERED_T1),
            HeaderName::from_static(RENDERED_WIDTH),
        ]);
    let api = Router::new()
        .route("/health", get(|| async { Json(serde_json::json!({ "status": "ok" })) }))
        .route("/datasets", get(list_datasets).post(upload))
        .route("/datasets/{id}", get(dataset_meta).delete(delete_dataset))
        .route("/datasets/{id}/{*endpoint}", get(dataset_query))
        .route("/jobs/{job}", get(job_status))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT));
    Router::new().nest("/api/v1", api).layer(cors).with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorKind::Internal, "INTERNAL", e.to_string()))?
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let store = state.store.clone();
    let metas = blocking(move || Ok(store.list()?)).await?;
    Ok(Json(metas).into_response())
}

async fn dataset_meta(state: State<Arc<AppState>>, id: Path<String>, headers: HeaderMap) -> Result<Response, ApiError> {
    run_query(state, id.0, String::new(), Params::new(), headers).await
}

async fn dataset_query(
    state: State<Arc<AppState>>,
    Path((id, endpoint)): Path<(String, String)>,
    QueryParams(params): QueryParams<Params>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    run_query(state, id, endpoint, params, headers).await
}

/// Sets the flag when dropped, i.e. when the client goes away mid-query.
struct CancelOnDrop(Arc<AtomicBool>);

impl Drop for CancelOnDrop {
    fn drop(&mut self) {
        self.0.store(true, Ordering::Relaxed);
    }
}

fn register_view(state: &AppState, id: &str, params: &Params) -> Result<Arc<AtomicBool>, ApiError> {
    let flag = Arc::new(AtomicBool::new(false));
    let (Some(view), Some(generation)) = (params.get("view"), params.get("generation")) else {
        return Ok(flag);
    };
    let generation: u64 = generation
        .parse()
        .map_err(|_| ApiError::bad_request("generation must be an unsigned integer"))?;
    let mut views = state.views.lock().expect("view table poisoned");
    let key = (id.to_owned(), view.clone());
    if let Some((latest, old)) = views.get(&key) {
        if generation < *latest {
            return Err(ApiError::new(
                ErrorKind::Conflict,
                "SUPERSEDED",
                format!("generation {generation} is older than {latest}"),
            ));
        }
        if generation > *latest {
            old.store(true, Ordering::Relaxed);
        }
    }
    views.insert(key, (generation, flag.clone()));
    Ok(flag)
}

async fn run_query(
    State(state): State<Arc<AppState>>,
    id: String,
    endpoint: String,
    params: Params,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    state.check_ready(&id)?;
    let flag = register_view(&state, &id, &params)?;
    let _guard = CancelOnDrop(flag.clone());
    let worker = state.clone();
    let answer = blocking(move || {
        let ds = worker.store.load(&id)?;
        let query = Query::parse(&ds, &endpoint, &params, worker.config.overdraw)?;
        execute(&ds, &query, Cancel::new(&flag))
    })
    .await?;
    Ok(respond(&answer, &headers))
}

fn wants_binary(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .any(|v| v.contains("application/octet-stream"))
}

fn respond(answer: &Answer, headers: &HeaderMap) -> Response {
    let binary = wants_binary(headers).then(|| answer.to_f32()).flatten();
    let mut response = match binary {
        Some(bytes) => ([(header::CONTENT_TYPE, "application/octet-stream")], Bytes::from(bytes)).into_response(),
        None => (
            [(header::CONTENT_TYPE, "application/json")],
            Bytes::from(answer.to_json()),
        )
            .into_response(),
    };
    if let Some(v) = answer.rendered() {
        let h = response.headers_mut();
        h.insert(RENDERED_T0, HeaderValue::from(v.t0));
        h.insert(RENDERED_T1, HeaderValue::from(v.t1));
        h.insert(RENDERED_WIDTH, HeaderValue::from(v.width));
    }
    response
}

async fn delete_dataset(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    state.check_ready(&id)?;
    let store = state.store.clone();
    blocking(move || Ok(store.delete(&id)?)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn job_status(State(state): State<Arc<AppState>>, Path(job): Path<String>) -> Result<Response, ApiError> {
    let jobs = state.jobs.lock().expect("job table poisoned");
    let job = jobs
        .get(&job)
        .ok_or_else(|| ApiError::new(ErrorKind::NotFound, "UNKNOWN_JOB", format!("no job {job:?}")))?;
    Ok(Json(job.clone()).into_response())
}

/// Multipart fields: `trace` (file, required), `label` (required), `bins`
/// (optional) and any further file parts, which satisfy `S` references by
/// their file name.
async fn upload(State(state): State<Arc<AppState>>, mut form: Multipart) -> Result<Response, ApiError> {
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request(e.body_text());
    let (mut trace, mut label, mut bins) = (None, None, None);
    let mut sources = HashMap::new();
    while let Some(field) = form.next_field().await.map_err(bad)? {
        let name = field.name().unwrap_or("").to_owned();
        let file_name = field.file_name().map(str::to_owned);
        let data = field.bytes().await.map_err(bad)?;
        match name.as_str() {
            "trace" => trace = Some(data),
            "label" => label = Some(String::from_utf8_lossy(&data).into_owned()),
            "bins" => {
                let text = String::from_utf8_lossy(&data);
                bins = Some(
                    text.trim()
                        .parse::<u32>()
                        .map_err(|_| ApiError::bad_request("bins must be an integer"))?,
                );
            }
            _ => {
                let key = file_name.unwrap_or(name);
                sources.insert(key, String::from_utf8_lossy(&data).into_owned());
            }
        }
    }
    let trace = trace.ok_or_else(|| ApiError::bad_request("missing multipart field trace"))?;
    let label = label.unwrap_or_default();
    if label.trim().is_empty() {
        return Err(ApiError::bad_request("missing multipart field label"));
    }
    let options = BuildOptions {
        bin_count: bins.unwrap_or(state.config.build.bin_count),
    };
    let dataset_id = dataset_id_of(&trace);
    let job_id = format!("job-{}", state.next_job.fetch_add(1, Ordering::Relaxed));
    let job = Job {
        job_id: job_id.clone(),
        status: JobStatus::Running,
        dataset_id: dataset_id.clone(),
        label: label.trim().to_owned(),
        cached: None,
        warnings: None,
        error: None,
    };
    state
        .jobs
        .lock()
        .expect("job table poisoned")
        .insert(job_id.clone(), job.clone());
    let fresh = !state.store.contains(&dataset_id)
        && state
            .bundling
            .lock()
            .expect("bundling set poisoned")
            .insert(dataset_id.clone());
    let worker = state.clone();
    let id = job_id.clone();
    tokio::task::spawn_blocking(move || {
        let result = worker.store.bundle_bytes(&trace, &label, options, |path| {
            let base = std::path::Path::new(path)
                .file_name()
                .and_then(|f| f.to_str())
                .unwrap_or(path);
            sources.get(path).or_else(|| sources.get(base)).cloned()
        });
        if fresh {
            worker
                .bundling
                .lock()
                .expect("bundling set poisoned")
                .remove(&dataset_id);
        }
        let mut jobs = worker.jobs.lock().expect("job table poisoned");
        let job = jobs.get_mut(&id).expect("job registered before spawn");
        match result {
            Ok(outcome) => {
                job.status = JobStatus::Done;
                job.cached = Some(outcome.cached);
                job.warnings = Some(outcome.warnings);
            }
            Err(e) => {
                let e = ApiError::from(e);
                log::warn!("bundling job {id} failed: {e}");
                job.status = JobStatus::Failed;
                job.error = Some(JobError {
                    code: e.code,
                    message: e.message,
                    details: e.details,
                });
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)).into_response())
}

/// Serve the API on `listener` until the process ends.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
