//! The local labelling service.
//!
//! | route              | body                                                    |
//! |--------------------|---------------------------------------------------------|
//! | `POST /session`    | `{annotations, checkpoint, sampling?}`                  |
//! | `GET /objects`     |                                                         |
//! | `POST /proposals`  | `{object_id, image_id?, depth, n?, steps?, seed?}`      |
//! | `POST /select`     | `{object_id, image_id?, proposal_index, depth, ...}`    |
//! | `GET /log`         |                                                         |
//! | `GET /export`      |                                                         |
//!
//! `annotations` and `checkpoint` are file paths or inline JSON documents.
//! Every response is one documented library call: `/proposals` is
//! [`proposals_at_depth`] and `/export` is [`replay`] of the selection log.
//! Errors are `{"error": message}` with status 400 (bad request), 404
//! (unknown object) or 409 (no session yet, or a selection without
//! proposals).
//!
//! Depths are quantised to millimetres before sampling, so a proposal set
//! is fully determined by its [`ProposalKey`] and is cached under it.

use std::collections::HashMap;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boxdiff::denoiser::{Checkpoint, CheckpointModel};
use boxdiff::eval::views::{
    depth_key, find_object, label_of, proposals_at_depth, replay, Label, ProposalKey, ProposalSet,
    Selection,
};
use boxdiff::eval::{AnnotationSet, Box2D, DiffusionPipeline, EvalError};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commands::{load_checkpoint, ServeArgs};
use crate::config::Sampling;
use crate::CliError;

pub const PORT_ENV: &str = "BOXDIFF_PORT";
pub const DEFAULT_PORT: u16 = 8731;

pub struct Session {
    set: AnnotationSet,
    pipeline: DiffusionPipeline,
    model: &'static str,
    defaults: Sampling,
    /// Written once per key, never modified.
    cache: Mutex<HashMap<ProposalKey, Arc<ProposalSet>>>,
    /// Latest request per `(object, depth)`, used by `/select` when the
    /// sampling parameters are left out.
    latest: Mutex<HashMap<(usize, i64), ProposalKey>>,
    /// Append-only.
    log: Mutex<Vec<Selection>>,
}

impl Session {
    pub fn new(
        set: AnnotationSet,
        ckpt: &Checkpoint,
        defaults: Sampling,
    ) -> Result<Self, EvalError> {
        let pipeline = DiffusionPipeline::from_checkpoint(ckpt, Some(&set))?;
        let model = match ckpt.model {
            CheckpointModel::Oracle { .. } => "oracle",
            CheckpointModel::Constant { .. } => "constant",
            CheckpointModel::Mlp { .. } => "mlp",
        };
        Ok(Self {
            set,
            pipeline,
            model,
            defaults,
            cache: Mutex::default(),
            latest: Mutex::default(),
            log: Mutex::default(),
        })
    }

    pub fn selections(&self) -> Vec<Selection> {
        self.log.lock().expect("log lock").clone()
    }
}

/// Shared service state. Requests take a snapshot of the current session
/// and work on it; only `/session` swaps it.
#[derive(Default, Clone)]
pub struct AppState {
    session: Arc<RwLock<Option<Arc<Session>>>>,
}

impl AppState {
    pub fn with_session(session: Session) -> Self {
        Self {
            session: Arc::new(RwLock::new(Some(Arc::new(session)))),
        }
    }

    fn snapshot(&self) -> Result<Arc<Session>, ApiError> {
        self.session
            .read()
            .expect("session lock")
            .clone()
            .ok_or_else(|| ApiError::conflict("no session; POST /session first"))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad(m: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: m.into(),
        }
    }
    fn not_found(m: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: m.into(),
        }
    }
    fn conflict(m: impl Into<String>) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            message: m.into(),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownObject(_) | EvalError::UnknownImage(_) => {
                ApiError::not_found(e.to_string())
            }
            EvalError::Output(m) => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: m,
            },
            other => ApiError::bad(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(serde_json::json!({ "error": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/objects", get(objects))
        .route("/proposals", post(proposals))
        .route("/select", post(select))
        .route("/log", get(log))
        .route("/export", get(export))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    annotations: Value,
    checkpoint: Value,
    #[serde(default)]
    sampling: Sampling,
}

#[derive(Debug, Serialize)]
struct SessionInfo {
    images: usize,
    objects: usize,
    model: &'static str,
    sampling: Sampling,
}

/// A JSON string is read as a file path, anything else as the document.
fn document(v: Value, what: &str) -> Result<String, ApiError> {
    match v {
        Value::String(path) => std::fs::read_to_string(&path)
            .map_err(|e| ApiError::bad(format!("cannot read {what} `{path}`: {e}"))),
        other => Ok(other.to_string()),
    }
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> ApiResult<SessionInfo> {
    let Json(req) = body?;
    if req.sampling.n_eval == 0 || req.sampling.steps == 0 {
        return Err(ApiError::bad(
            "sampling.n_eval and sampling.steps must be at least 1",
        ));
    }
    let set = AnnotationSet::from_json(&document(req.annotations, "annotations")?)?;
    let ckpt = Checkpoint::from_json(&document(req.checkpoint, "checkpoint")?)
        .map_err(|e| ApiError::bad(e.to_string()))?;
    let session = Session::new(set, &ckpt, req.sampling)?;
    let info = SessionInfo {
        images: session.set.images.len(),
        objects: session.set.objects.len(),
        model: session.model,
        sampling: session.defaults.clone(),
    };
    *state.session.write().expect("session lock") = Some(Arc::new(session));
    Ok(Json(info))
}

#[derive(Debug, Serialize)]
struct ObjectInfo<'a> {
    index: usize,
    image_id: &'a str,
    object_id: &'a str,
    category: &'a str,
    box2d: &'a Box2D,
    depth: f64,
}

async fn objects(State(state): State<AppState>) -> Result<Response, ApiError> {
    let s = state.snapshot()?;
    let list: Vec<ObjectInfo> = s
        .set
        .objects
        .iter()
        .enumerate()
        .map(|(index, o)| ObjectInfo {
            index,
            image_id: &o.image_id,
            object_id: &o.id,
            category: &o.category,
            box2d: &o.box2d,
            depth: s.set.prompt(o).z,
        })
        .collect();
    Ok(Json(serde_json::json!({ "objects": list })).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalRequest {
    object_id: String,
    image_id: Option<String>,
    depth: f64,
    n: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
}

fn lookup(s: &Session, image_id: Option<&str>, object_id: &str) -> Result<usize, ApiError> {
    Ok(find_object(&s.set, image_id, object_id)?.0)
}

fn checked_depth(depth: f64) -> Result<i64, ApiError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(ApiError::bad("depth must be a positive number of metres"));
    }
    let k = depth_key(depth);
    if k <= 0 {
        return Err(ApiError::bad("depth rounds to zero millimetres"));
    }
    Ok(k)
}

/// The cached proposal set for `key`, sampling it on first use.
fn cached(s: &Session, key: ProposalKey) -> Result<Arc<ProposalSet>, ApiError> {
    if let Some(hit) = s.cache.lock().expect("cache lock").get(&key) {
        return Ok(hit.clone());
    }
    let fresh = Arc::new(proposals_at_depth(&s.set, &s.pipeline, &key)?);
    // Sampling is deterministic, so a concurrent writer produced the same
    // value; the first entry is kept either way.
    Ok(s.cache
        .lock()
        .expect("cache lock")
        .entry(key)
        .or_insert(fresh)
        .clone())
}

async fn proposals(
    State(state): State<AppState>,
    body: Result<Json<ProposalRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let s = state.snapshot()?;
    let object_index = lookup(&s, req.image_id.as_deref(), &req.object_id)?;
    let depth_mm = checked_depth(req.depth)?;
    let key = ProposalKey {
        object_index,
        depth_mm,
        seed: req.seed.unwrap_or(s.defaults.seed),
        n_eval: req.n.unwrap_or(s.defaults.n_eval),
        steps: req.steps.unwrap_or(s.defaults.steps),
    };
    if key.n_eval == 0 || key.steps == 0 {
        return Err(ApiError::bad("n and steps must be at least 1"));
    }
    let set = tokio::task::block_in_place(|| cached(&s, key))?;
    s.latest
        .lock()
        .expect("latest lock")
        .insert((object_index, depth_mm), key);
    Ok(Json(&*set).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectRequest {
    object_id: String,
    image_id: Option<String>,
    proposal_index: usize,
    depth: f64,
    n: Option<usize>,
    steps: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Serialize)]
struct SelectResponse {
    selections: usize,
    label: Label,
}

async fn select(
    State(state): State<AppState>,
    body: Result<Json<SelectRequest>, JsonRejection>,
) -> ApiResult<SelectResponse> {
    let Json(req) = body?;
    let s = state.snapshot()?;
    let object_index = lookup(&s, req.image_id.as_deref(), &req.object_id)?;
    let depth_mm = checked_depth(req.depth)?;
    let latest = s
        .latest
        .lock()
        .expect("latest lock")
        .get(&(object_index, depth_mm))
        .copied();
    let key = match (latest, req.n, req.steps, req.seed) {
        (Some(k), None, None, None) => k,
        (_, n, steps, seed) => ProposalKey {
            object_index,
            depth_mm,
            seed: seed.unwrap_or(s.defaults.seed),
            n_eval: n.unwrap_or(s.defaults.n_eval),
            steps: steps.unwrap_or(s.defaults.steps),
        },
    };
    let ps = s
        .cache
        .lock()
        .expect("cache lock")
        .get(&key)
        .cloned()
        .ok_or_else(|| ApiError::conflict("request proposals for this object and depth first"))?;
    let selection = Selection {
        key,
        proposal_index: req.proposal_index,
    };
    let label = label_of(&s.set, &ps, &selection)?;
    let mut log = s.log.lock().expect("log lock");
    log.push(selection);
    Ok(Json(SelectResponse {
        selections: log.len(),
        label,
    }))
}

async fn log(State(state): State<AppState>) -> Result<Response, ApiError> {
    let s = state.snapshot()?;
    Ok(Json(serde_json::json!({ "selections": s.selections() })).into_response())
}

async fn export(State(state): State<AppState>) -> Result<Response, ApiError> {
    let s = state.snapshot()?;
    let log = s.selections();
    let labels = tokio::task::block_in_place(|| replay(&s.set, &s.pipeline, &log))?;
    Ok(Json(serde_json::json!({ "labels": labels })).into_response())
}

/// The port from `--port`, then the environment, then the default.
pub fn resolve_port(flag: Option<u16>) -> Result<u16, CliError> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Input(format!("{PORT_ENV}=`{v}` is not a port number"))),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub(crate) fn serve_blocking(a: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let state = match (&a.annotations, &a.checkpoint) {
        (Some(ann), Some(ck)) => {
            let set = AnnotationSet::load(ann)?;
            let ckpt = load_checkpoint(ck)?;
            AppState::with_session(Session::new(set, &ckpt, Sampling::default())?)
        }
        _ => AppState::default(),
    };
    let port = resolve_port(a.port)?;
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let rt = tokio::runtime::Runtime::new()
        .map_err(|e| CliError::Runtime(format!("cannot start runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let _ = writeln!(out, "listening on http://{addr}");
        let _ = out.flush();
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

/// Loads a session from files, for embedding the service elsewhere.
pub fn session_from_files(
    annotations: &Path,
    checkpoint: &Path,
    defaults: Sampling,
) -> Result<Session, CliError> {
    let set = AnnotationSet::load(annotations)?;
    let ckpt = load_checkpoint(checkpoint)?;
    Ok(Session::new(set, &ckpt, defaults)?)
}
