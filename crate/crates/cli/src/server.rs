//! HTTP service over loaded decompositions.
//!
//! Sessions are held in memory with least-recently-used eviction. Heavy work
//! (loading, fitting, recomposition) runs on the blocking pool.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use skinspec_core::editor::{EditScript, RegionMask};
use skinspec_core::Error as CoreError;

use crate::commands::{self, ServeArgs};
use crate::error::{CliError, CliResult};
use crate::session::{self, Decomposition};

pub const DEFAULT_MAX_SESSIONS: usize = 4;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::InvalidEdit(_) | CoreError::InvalidArgument(_) | CoreError::Image(_) => StatusCode::BAD_REQUEST,
            CoreError::DimensionMismatch(_) | CoreError::GridMismatch(_) | CoreError::MissingProbability => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match &e {
            CliError::Parse(_) | CliError::Config(_) => StatusCode::UNPROCESSABLE_ENTITY,
            CliError::Numeric(_) | CliError::Other(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Session {
    decomposition: Decomposition,
    /// Uploaded masks; script mask names not found here are read as PNG
    /// paths relative to the decomposition directory, as the CLI does.
    masks: Mutex<HashMap<String, RegionMask>>,
    /// Scripts previewed in this session, oldest first.
    history: Mutex<Vec<EditScript>>,
}

impl Session {
    fn masks_for(&self, script: &EditScript) -> ApiResult<HashMap<String, RegionMask>> {
        let mut masks = self.masks.lock().unwrap().clone();
        let missing = EditScript {
            ops: script
                .ops
                .iter()
                .filter(|o| o.mask.as_ref().is_some_and(|m| !masks.contains_key(m)))
                .cloned()
                .collect(),
        };
        let loaded = session::load_mask_files(&missing, &self.decomposition.dir)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown mask: {e}")))?;
        masks.extend(loaded);
        Ok(masks)
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { out: PathBuf, failed_pixels: usize },
    Failed { error: String, exit_code: i32 },
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Arc<Session>>,
    /// Least recently used first.
    order: VecDeque<String>,
    jobs: HashMap<String, JobState>,
    next_session: u64,
    next_job: u64,
}

impl Registry {
    fn touch(&mut self, id: &str) {
        self.order.retain(|x| x != id);
        self.order.push_back(id.to_string());
    }
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState {
    registry: Arc<Mutex<Registry>>,
    max_sessions: usize,
}

impl AppState {
    pub fn new(max_sessions: usize) -> Self {
        AppState {
            registry: Arc::default(),
            max_sessions: max_sessions.max(1),
        }
    }

    /// Registers a loaded decomposition, evicting the least recently used one at capacity.
    pub fn insert(&self, d: Decomposition) -> String {
        let mut reg = self.registry.lock().unwrap();
        reg.next_session += 1;
        let id = format!("s{}", reg.next_session);
        while reg.sessions.len() >= self.max_sessions {
            let Some(old) = reg.order.pop_front() else { break };
            log::info!("evicting session {old}");
            reg.sessions.remove(&old);
        }
        reg.sessions.insert(
            id.clone(),
            Arc::new(Session {
                decomposition: d,
                masks: Mutex::default(),
                history: Mutex::default(),
            }),
        );
        reg.touch(&id);
        id
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        let mut reg = self.registry.lock().unwrap();
        let s = reg.sessions.get(id).cloned().ok_or_else(|| ApiError::not_found(format!("session {id:?}")))?;
        reg.touch(id);
        Ok(s)
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

#[derive(Deserialize)]
struct OpenRequest {
    dir: PathBuf,
}

#[derive(Serialize)]
struct IdResponse {
    id: String,
}

async fn open_session(State(st): State<AppState>, Json(req): Json<OpenRequest>) -> ApiResult<Response> {
    if !req.dir.is_dir() {
        return Err(ApiError::not_found(format!("directory {}", req.dir.display())));
    }
    let d = blocking(move || Decomposition::load(&req.dir).map_err(ApiError::from)).await?;
    let id = st.insert(d);
    Ok((StatusCode::CREATED, Json(IdResponse { id })).into_response())
}

async fn close_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let mut reg = st.registry.lock().unwrap();
    reg.sessions.remove(&id).ok_or_else(|| ApiError::not_found(format!("session {id:?}")))?;
    reg.order.retain(|x| *x != id);
    Ok(StatusCode::NO_CONTENT)
}

async fn meta(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(st.session(&id)?.decomposition.meta()).into_response())
}

async fn map_file(State(st): State<AppState>, Path((id, file)): Path<(String, String)>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    let (stem, ext) = file.rsplit_once('.').ok_or_else(|| ApiError::not_found(format!("map file {file:?}")))?;
    if stem == "skin_probability" && s.decomposition.maps.skin_probability.is_none() {
        return Err(CoreError::MissingProbability.into());
    }
    let (stem, ext) = (stem.to_string(), ext.to_string());
    blocking(move || {
        let d = &s.decomposition;
        match ext.as_str() {
            "png" => {
                let bytes = d.map_png(&stem).ok_or_else(|| ApiError::not_found(format!("map {stem:?}")))??;
                Ok(png(bytes))
            }
            "bin" => {
                let bytes = d.map_bin(&stem).ok_or_else(|| ApiError::not_found(format!("map {stem:?}")))?;
                Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
            }
            _ => Err(ApiError::not_found(format!("map format {ext:?}"))),
        }
    })
    .await
}

async fn render(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    blocking(move || Ok(png(s.decomposition.render_png()?))).await
}

async fn observed(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    blocking(move || Ok(png(s.decomposition.render_observed_png()?))).await
}

async fn edit(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let s = st.session(&id)?;
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let script = EditScript::from_json(text)?;
    blocking(move || {
        let masks = s.masks_for(&script)?;
        let bytes = s.decomposition.edit_render_png(&script, &masks)?;
        s.history.lock().unwrap().push(script);
        Ok(png(bytes))
    })
    .await
}

async fn history(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    let scripts: Vec<serde_json::Value> = s
        .history
        .lock()
        .unwrap()
        .iter()
        .map(|sc| serde_json::from_str(&sc.to_json()).expect("script JSON round-trips"))
        .collect();
    Ok(Json(scripts).into_response())
}

#[derive(Deserialize)]
struct PixelQuery {
    x: usize,
    y: usize,
}

async fn spectrum(State(st): State<AppState>, Path(id): Path<String>, Query(q): Query<PixelQuery>) -> ApiResult<Response> {
    let s = st.session(&id)?;
    let report = s.decomposition.pixel(q.x, q.y).ok_or_else(|| {
        let m = &s.decomposition.maps;
        ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("pixel ({}, {}) outside {}×{}", q.x, q.y, m.width, m.height),
        )
    })?;
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct MaskQuery {
    name: String,
}

async fn upload_mask(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let s = st.session(&id)?;
    if q.name.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "mask name must not be empty"));
    }
    let mask = RegionMask::from_png(&body)?;
    let m = &s.decomposition.maps;
    if (mask.width, mask.height) != (m.width, m.height) {
        return Err(CoreError::DimensionMismatch(format!(
            "mask is {}×{}, session is {}×{}",
            mask.width, mask.height, m.width, m.height
        ))
        .into());
    }
    s.masks.lock().unwrap().insert(q.name, mask);
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct DecomposeRequest {
    cube: PathBuf,
    config: PathBuf,
    out: PathBuf,
}

async fn start_job(State(st): State<AppState>, Json(req): Json<DecomposeRequest>) -> ApiResult<Response> {
    let id = {
        let mut reg = st.registry.lock().unwrap();
        reg.next_job += 1;
        let id = format!("j{}", reg.next_job);
        reg.jobs.insert(id.clone(), JobState::Running);
        id
    };
    let registry = st.registry.clone();
    let job = id.clone();
    tokio::task::spawn_blocking(move || {
        let state = match commands::decompose(&req.cube, &req.config, &req.out) {
            Ok(maps) => JobState::Done {
                out: req.out,
                failed_pixels: maps
                    .status
                    .iter()
                    .filter(|s| **s == skinspec_core::maps::FitStatus::Failed)
                    .count(),
            },
            Err(e) => JobState::Failed {
                exit_code: e.exit_code(),
                error: e.to_string(),
            },
        };
        registry.lock().unwrap().jobs.insert(job, state);
    });
    Ok((StatusCode::ACCEPTED, Json(IdResponse { id })).into_response())
}

async fn job_status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let reg = st.registry.lock().unwrap();
    let job = reg.jobs.get(&id).ok_or_else(|| ApiError::not_found(format!("job {id:?}")))?;
    Ok(Json(job.clone()).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", axum::routing::delete(close_session))
        .route("/sessions/{id}/meta", get(meta))
        .route("/sessions/{id}/maps/{file}", get(map_file))
        .route("/sessions/{id}/render", get(render))
        .route("/sessions/{id}/observed", get(observed))
        .route("/sessions/{id}/edit", post(edit))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/spectrum", get(spectrum))
        .route("/sessions/{id}/masks", post(upload_mask))
        .route("/jobs/decompose", post(start_job))
        .route("/jobs/{id}", get(job_status))
        .with_state(state)
}

pub fn serve(args: ServeArgs) -> CliResult<()> {
    let state = AppState::new(args.max_sessions);
    for dir in &args.sessions {
        let id = state.insert(Decomposition::load(dir)?);
        log::info!("session {id}: {}", dir.display());
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(format!("runtime: {e}")))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Other(format!("bind {addr}: {e}")))?;
        log::info!("listening on {addr}");
        axum::serve(listener, router(state))
            .await
            .map_err(|e| CliError::Other(format!("server: {e}")))
    })
}
