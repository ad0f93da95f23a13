//! HTTP service: sessions, synthesis, runs with server-sent frame
//! streams, perturbations, feedback and the catalogue.

use crate::config::Config;
use crate::error::ApiError;
use crate::llm::make_client;
use crate::runs::{self, Attribution, RunHandle, RunRequest};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use flowscribe_core::agent::{
    apply_rating, synthesize, Catalogue, CatalogueEntry, LlmClient, Rating, SynthError, SynthOptions, Verdict,
};
use flowscribe_core::control::{perturb, PerturbKind, Perturbation, RunMode};
use flowscribe_core::flow::lut::FlowLut;
use flowscribe_core::flow::FlowModel;
use flowscribe_core::Vec2;
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use tokio::sync::watch;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("data directory {0}: {1}")]
    DataDir(String, String),
    #[error("catalogue {0}: {1}")]
    Catalogue(String, String),
    #[error("LUT {0}: {1}")]
    Lut(String, String),
}

#[derive(Debug, Clone, Default)]
struct Synthesized {
    prompt: String,
    spec_text: String,
    model_id: String,
}

#[derive(Debug, Default)]
struct Session {
    runs: Vec<String>,
    idempotency: HashMap<String, String>,
    synthesis: Option<Synthesized>,
}

pub struct AppState {
    pub config: Config,
    pub catalogue: Arc<Catalogue>,
    pub flow: Arc<FlowModel>,
    pub client: Arc<dyn LlmClient>,
    sessions: Mutex<HashMap<String, Session>>,
    runs: Mutex<HashMap<String, Arc<RunHandle>>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    closing: AtomicBool,
}

impl AppState {
    /// Open the data directory, catalogue and LUT named by `config`.
    pub fn open(config: Config) -> Result<AppState, StartError> {
        let client = make_client(&config.llm);
        AppState::with_client(config, client)
    }

    pub fn with_client(config: Config, client: Arc<dyn LlmClient>) -> Result<AppState, StartError> {
        let dir_err = |e: std::io::Error| StartError::DataDir(config.data_dir.display().to_string(), e.to_string());
        std::fs::create_dir_all(config.runs_dir()).map_err(dir_err)?;
        let cat_path = config.catalogue_path();
        let (catalogue, skipped) = Catalogue::open(&cat_path)
            .map_err(|e| StartError::Catalogue(cat_path.display().to_string(), e.to_string()))?;
        if !skipped.is_empty() {
            log::warn!("catalogue {}: skipped {} unreadable line(s)", cat_path.display(), skipped.len());
        }
        let flow = match &config.lut_path {
            Some(p) => {
                let lut = FlowLut::load(p).map_err(|e| StartError::Lut(p.display().to_string(), e.to_string()))?;
                FlowModel::new(Arc::new(lut))
            }
            None => FlowModel::default(),
        };
        Ok(AppState {
            config,
            catalogue: Arc::new(catalogue),
            flow: Arc::new(flow),
            client,
            sessions: Mutex::new(HashMap::new()),
            runs: Mutex::new(HashMap::new()),
            workers: Mutex::new(Vec::new()),
            closing: AtomicBool::new(false),
        })
    }

    fn run(&self, rid: &str) -> Result<Arc<RunHandle>, ApiError> {
        self.runs
            .lock()
            .expect("runs lock")
            .get(rid)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no run {rid}")))
    }

    /// Stop every live run; frames already produced stay archived.
    pub fn begin_shutdown(&self) {
        self.closing.store(true, Ordering::SeqCst);
        for h in self.runs.lock().expect("runs lock").values() {
            h.request_stop();
        }
    }

    /// Wait for every run worker to finish its archive.
    pub fn join_workers(&self) {
        let workers = std::mem::take(&mut *self.workers.lock().expect("workers lock"));
        for w in workers {
            if w.join().is_err() {
                log::error!("a run worker panicked");
            }
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/schema", get(schema))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/synthesize", post(synthesize_spec))
        .route("/sessions/{id}/runs", post(create_run))
        .route("/runs/{rid}", get(get_run))
        .route("/runs/{rid}/events", get(events))
        .route("/runs/{rid}/perturb", post(perturb_run))
        .route("/runs/{rid}/stop", post(stop_run))
        .route("/runs/{rid}/feedback", post(feedback))
        .route("/catalogue", get(catalogue))
        .with_state(state)
}

/// Serve until `shutdown` resolves, then stop live runs, drain open
/// connections and wait for the run archives to be finished.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let st = Arc::clone(&state);
    axum::serve(listener, router(Arc::clone(&state)))
        .with_graceful_shutdown(async move {
            shutdown.await;
            log::info!("shutting down");
            st.begin_shutdown();
        })
        .await?;
    let st = Arc::clone(&state);
    tokio::task::spawn_blocking(move || st.join_workers())
        .await
        .map_err(std::io::Error::other)?;
    Ok(())
}

fn body<T>(b: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    b.map(|Json(v)| v).map_err(|e| ApiError::unprocessable(e.body_text()))
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "version": VERSION,
        "model_id": st.client.model_id(),
        "catalogue_entries": st.catalogue.len(),
    }))
}

async fn schema() -> Json<Value> {
    Json(crate::schema::document())
}

async fn create_session(State(st): State<Arc<AppState>>) -> impl IntoResponse {
    let id = uuid::Uuid::new_v4().to_string();
    st.sessions.lock().expect("sessions lock").insert(id.clone(), Session::default());
    (StatusCode::CREATED, Json(json!({ "session_id": id })))
}

fn no_session(id: &str) -> ApiError {
    ApiError::NotFound(format!("no session {id}"))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let sessions = st.sessions.lock().expect("sessions lock");
    let s = sessions.get(&id).ok_or_else(|| no_session(&id))?;
    let runs = st.runs.lock().expect("runs lock");
    let live = s.runs.iter().find(|r| runs.get(*r).is_some_and(|h| !h.is_finished()));
    Ok(Json(json!({
        "session_id": id,
        "runs": s.runs,
        "live_run": live,
        "spec_text": s.synthesis.as_ref().map(|x| &x.spec_text),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesizeRequest {
    prompt: String,
    #[serde(default)]
    budget: Option<usize>,
}

async fn synthesize_spec(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    req: Result<Json<SynthesizeRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let req = body(req)?;
    if !st.sessions.lock().expect("sessions lock").contains_key(&id) {
        return Err(no_session(&id));
    }
    if req.prompt.trim().is_empty() {
        return Err(ApiError::unprocessable("prompt is empty"));
    }
    let opts = SynthOptions {
        budget: req.budget.unwrap_or(SynthOptions::default().budget),
        ..SynthOptions::default()
    };
    let (cat, client, prompt) = (Arc::clone(&st.catalogue), Arc::clone(&st.client), req.prompt.clone());
    let result = tokio::task::spawn_blocking(move || synthesize(&prompt, &cat, &*client, &opts))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    match result {
        Ok(s) => {
            if let Some(sess) = st.sessions.lock().expect("sessions lock").get_mut(&id) {
                sess.synthesis = Some(Synthesized {
                    prompt: req.prompt,
                    spec_text: s.spec_text.clone(),
                    model_id: s.provenance.model_id.clone(),
                });
            }
            Ok(Json(json!({
                "spec_text": s.spec_text,
                "spec": s.spec.to_json(),
                "provenance": s.provenance,
                "transcript": s.transcript,
            })))
        }
        Err(SynthError::Failed {
            reason,
            transcript,
            dont_entry,
            ..
        }) => Err(ApiError::SynthesisFailed {
            message: reason,
            transcript,
            dont_entry,
        }),
        Err(SynthError::Client(e)) => Err(ApiError::Upstream(e.to_string())),
    }
}

fn run_created(h: &RunHandle) -> Value {
    json!({
        "run_id": h.id,
        "session_id": h.session,
        "events": format!("/runs/{}/events", h.id),
        "spec_text": h.config.spec_text,
    })
}

async fn create_run(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    req: Result<Json<RunRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .map(|v| v.to_str().map(str::to_owned).map_err(|_| ApiError::unprocessable("bad Idempotency-Key")))
        .transpose()?;
    // Replays of a known key return the original run before anything else
    // is checked.
    if let Some(k) = &key {
        let sessions = st.sessions.lock().expect("sessions lock");
        let s = sessions.get(&id).ok_or_else(|| no_session(&id))?;
        if let Some(rid) = s.idempotency.get(k) {
            let h = st.run(rid)?;
            return Ok((StatusCode::OK, Json(run_created(&h))));
        }
    }
    let req = body(req)?;
    let config = req.to_config()?;
    if st.closing.load(Ordering::SeqCst) {
        return Err(ApiError::Conflict("service is shutting down".into()));
    }
    let mut sessions = st.sessions.lock().expect("sessions lock");
    let s = sessions.get_mut(&id).ok_or_else(|| no_session(&id))?;
    let mut runs = st.runs.lock().expect("runs lock");
    if let Some(live) = s.runs.iter().find(|r| runs.get(*r).is_some_and(|h| !h.is_finished())) {
        return Err(ApiError::Conflict(format!("run {live} is still live in this session")));
    }
    let attribution = match (&req.prompt, &s.synthesis) {
        (Some(p), _) => Attribution {
            prompt: p.clone(),
            model_id: "manual".into(),
        },
        (None, Some(syn)) if syn.spec_text == config.spec_text => Attribution {
            prompt: syn.prompt.clone(),
            model_id: syn.model_id.clone(),
        },
        _ => Attribution {
            prompt: String::new(),
            model_id: "manual".into(),
        },
    };
    let rid = uuid::Uuid::new_v4().to_string();
    let archive = st.config.runs_dir().join(format!("{rid}.run"));
    let handle = Arc::new(RunHandle::new(rid.clone(), id.clone(), config, attribution, archive));
    runs.insert(rid.clone(), Arc::clone(&handle));
    s.runs.push(rid.clone());
    if let Some(k) = key {
        s.idempotency.insert(k, rid);
    }
    drop(runs);
    drop(sessions);
    let worker = runs::spawn(Arc::clone(&handle), Arc::clone(&st.flow));
    st.workers.lock().expect("workers lock").push(worker);
    Ok((StatusCode::CREATED, Json(run_created(&handle))))
}

async fn get_run(State(st): State<Arc<AppState>>, Path(rid): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = st.run(&rid)?;
    Ok(Json(json!({
        "run_id": h.id,
        "session_id": h.session,
        "mode": h.config.mode,
        "n": h.config.n,
        "spec_text": h.config.spec_text,
        "frames": h.frame_count(),
        "finished": h.is_finished(),
        "outcome": h.outcome(),
        "archive": h.archive.file_name().map(|f| f.to_string_lossy().into_owned()),
    })))
}

/// Frame stream state: next frame index to send.
struct Cursor {
    handle: Arc<RunHandle>,
    rx: watch::Receiver<u64>,
    next: usize,
}

/// One `frame` event per cycle with the cycle as event id, then one `end`
/// event carrying the outcome.
pub fn frame_events(handle: Arc<RunHandle>, from: usize) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = handle.subscribe();
    let cursor = Cursor { handle, rx, next: from };
    futures::stream::unfold(Some(cursor), |cursor| async move {
        let mut c = cursor?;
        loop {
            c.rx.borrow_and_update();
            // Read the outcome first: once it is set every frame is in.
            let done = c.handle.outcome();
            if let Some(f) = c.handle.frame(c.next) {
                let ev = Event::default()
                    .id(c.next.to_string())
                    .event("frame")
                    .json_data(&f)
                    .expect("frames serialise");
                c.next += 1;
                return Some((Ok(ev), Some(c)));
            }
            if let Some(o) = done {
                let ev = Event::default().event("end").json_data(&o).expect("outcome serialises");
                return Some((Ok(ev), None));
            }
            if c.rx.changed().await.is_err() {
                return None;
            }
        }
    })
}

async fn events(
    State(st): State<Arc<AppState>>,
    Path(rid): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let h = st.run(&rid)?;
    let from = match headers.get("last-event-id") {
        None => 0,
        Some(v) => {
            v.to_str()
                .ok()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| ApiError::unprocessable("Last-Event-ID must be a cycle number"))?
                + 1
        }
    };
    Ok(Sse::new(frame_events(h, from)).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbRequest {
    #[serde(default)]
    kind: Option<String>,
    #[serde(default)]
    indices: Option<Vec<usize>>,
    #[serde(default)]
    displacements: Option<Vec<Vec2>>,
    #[serde(default)]
    magnitude: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
}

impl PerturbRequest {
    fn into_perturbation(self) -> Result<Perturbation, ApiError> {
        let kind = match (self.kind.as_deref(), self.displacements) {
            (None | Some("displace"), Some(vectors)) => PerturbKind::Displace { vectors },
            (Some("triangle" | "collapse-to-triangle"), None) => PerturbKind::CollapseToTriangle,
            (Some("scatter"), None) => PerturbKind::Scatter {
                magnitude: self.magnitude,
                seed: self.seed.unwrap_or(0),
            },
            (None, None) => return Err(ApiError::unprocessable("give a kind or displacements")),
            (Some(k), _) => {
                return Err(ApiError::unprocessable(format!(
                    "unknown or inconsistent perturbation kind {k:?}; expected triangle, scatter or displace"
                )))
            }
        };
        Ok(Perturbation {
            indices: self.indices,
            kind,
        })
    }
}

async fn perturb_run(
    State(st): State<Arc<AppState>>,
    Path(rid): Path<String>,
    req: Result<Json<PerturbRequest>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let h = st.run(&rid)?;
    let p = body(req)?.into_perturbation()?;
    if h.config.mode != RunMode::Inverse {
        return Err(ApiError::Conflict("only inverse-mode runs take perturbations".into()));
    }
    if h.is_finished() {
        return Err(ApiError::Conflict(format!("run {rid} has finished")));
    }
    // Dry run against the latest frame so a bad request cannot fail the run.
    if let Some(f) = h.last_frame() {
        perturb(&f.positions, &p, &h.config.control.planner.fov).map_err(|e| ApiError::unprocessable(e.to_string()))?;
    }
    let at = h.perturb(p);
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": rid, "applies_at_cycle": at }))))
}

async fn stop_run(State(st): State<Arc<AppState>>, Path(rid): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let h = st.run(&rid)?;
    h.request_stop();
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": rid }))))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackRequest {
    rating: Rating,
    #[serde(default)]
    comment: String,
}

async fn feedback(
    State(st): State<Arc<AppState>>,
    Path(rid): Path<String>,
    req: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<CatalogueEntry>, ApiError> {
    let h = st.run(&rid)?;
    let req = body(req)?;
    let Some(outcome) = h.outcome() else {
        return Err(ApiError::Conflict(format!("run {rid} is still live")));
    };
    let cat = Arc::clone(&st.catalogue);
    let result = tokio::task::spawn_blocking(move || -> Result<CatalogueEntry, ApiError> {
        let mut entry_id = h.entry.lock().expect("entry lock");
        let bad = |e: flowscribe_core::agent::CatalogueError| match e {
            flowscribe_core::agent::CatalogueError::Io(io) => ApiError::Internal(io.to_string()),
            e => ApiError::unprocessable(e.to_string()),
        };
        match entry_id.as_ref() {
            Some(id) => cat.record_feedback(id, req.rating, &req.comment).map_err(bad),
            None => {
                let a = &h.attribution;
                let mut e = CatalogueEntry::new(&a.prompt, &h.config.spec_text, Verdict::Do, &a.model_id);
                e.score = outcome.score;
                let e = apply_rating(&e, req.rating, &req.comment).map_err(bad)?;
                let e = cat.append(e).map_err(|e| ApiError::Internal(e.to_string()))?;
                *entry_id = Some(e.id.clone());
                Ok(e)
            }
        }
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    result.map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogueQuery {
    verdict: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

pub const PAGE_LIMIT: usize = 50;

async fn catalogue(
    State(st): State<Arc<AppState>>,
    q: Result<Query<CatalogueQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = q.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let verdict = match q.verdict.as_deref() {
        None | Some("") => None,
        Some(v) => Some(Verdict::parse(v).ok_or_else(|| ApiError::unprocessable(format!("unknown verdict {v:?}")))?),
    };
    let (offset, limit) = (q.offset.unwrap_or(0), q.limit.unwrap_or(PAGE_LIMIT).min(500));
    let entries = st.catalogue.page(verdict, offset, limit);
    let total = st.catalogue.page(verdict, 0, usize::MAX).len();
    Ok(Json(json!({ "entries": entries, "offset": offset, "limit": limit, "total": total })))
}
