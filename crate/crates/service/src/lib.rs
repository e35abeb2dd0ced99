//! Live teleoperation service.
//!
//! HTTP routes list scenes, serve obstacle meshes, create sessions and switch
//! the held object. Each session is driven over a WebSocket speaking the
//! [`wire`] schema: one driver sends twists, everyone else observes.

pub mod live;
pub mod wire;

use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State as AxState};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, watch};
use tokio::task::JoinHandle;

use semfilter::geometry::{Aabb, EnvelopeOptions, TriMesh};
use semfilter::io::{load_scene, Scene};
use semfilter::semantic::LlmClient;
use semfilter::sim::{builtin_scene, SessionConfig, SimError, SimSession, World, BUILTIN_SCENES};
use semfilter::{KinematicChain, SemanticContext};

use live::{Event, LiveConfig, LiveSession};
use wire::{envelope_meshes, ContextUpdate, Envelope, ErrorCode, ObjectInfo, Role, ServerMessage, WireError, MESH_RES};

/// Upper bound on the points per object returned by the mesh endpoint.
pub const MAX_MESH_POINTS: usize = 2048;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("scene directory {path}: {reason}")]
    SceneDir { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads every `scene.json` found in `dir` or its immediate subdirectories.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>, ServiceError> {
    let fail = |reason: String| ServiceError::SceneDir {
        path: dir.display().to_string(),
        reason,
    };
    if !dir.is_dir() {
        return Err(fail("not a directory".into()));
    }
    let mut manifests = Vec::new();
    if dir.join("scene.json").is_file() {
        manifests.push(dir.join("scene.json"));
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| fail(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("scene.json").is_file())
        .collect();
    subdirs.sort();
    manifests.extend(subdirs.into_iter().map(|p| p.join("scene.json")));
    if manifests.is_empty() {
        return Err(fail("no scene.json found".into()));
    }
    let mut scenes: Vec<Scene> = Vec::new();
    for path in manifests {
        let scene = load_scene(&path).map_err(|e| fail(e.to_string()))?;
        if scenes.iter().any(|s| s.id() == scene.id()) {
            return Err(fail(format!("duplicate scene id '{}'", scene.id())));
        }
        scenes.push(scene);
    }
    Ok(scenes)
}

pub struct ServiceConfig {
    pub scenes: Vec<Scene>,
    pub client: Arc<dyn LlmClient>,
    pub session: SessionConfig,
    pub live: LiveConfig,
    pub envelope: EnvelopeOptions,
    /// When set, every session writes its ticks to `<dir>/<session_id>.jsonl`.
    pub log_dir: Option<PathBuf>,
}

impl ServiceConfig {
    /// The built-in scenes, with `extra` added or replacing same-id ones.
    pub fn with_scenes(client: Arc<dyn LlmClient>, seed: u64, extra: Vec<Scene>) -> Self {
        let mut scenes: Vec<Scene> = BUILTIN_SCENES.iter().filter_map(|id| builtin_scene(id, seed)).collect();
        for scene in extra {
            scenes.retain(|s| s.id() != scene.id());
            scenes.push(scene);
        }
        Self {
            scenes,
            client,
            session: SessionConfig::default(),
            live: LiveConfig::default(),
            envelope: EnvelopeOptions::default(),
            log_dir: None,
        }
    }
}

struct Inner {
    scenes: BTreeMap<String, Arc<Scene>>,
    worlds: tokio::sync::Mutex<HashMap<String, Arc<World>>>,
    sessions: Mutex<HashMap<String, Arc<LiveSession>>>,
    next_session: AtomicU64,
    client: Arc<dyn LlmClient>,
    session: SessionConfig,
    live: LiveConfig,
    envelope: EnvelopeOptions,
    log_dir: Option<PathBuf>,
    shutdown: watch::Sender<bool>,
    steppers: Mutex<Vec<JoinHandle<()>>>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self(Arc::new(Inner {
            scenes: config.scenes.into_iter().map(|s| (s.id().to_string(), Arc::new(s))).collect(),
            worlds: tokio::sync::Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
            client: config.client,
            session: config.session,
            live: config.live,
            envelope: config.envelope,
            log_dir: config.log_dir,
            shutdown: watch::channel(false).0,
            steppers: Mutex::new(Vec::new()),
        }))
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.0.scenes.keys().cloned().collect()
    }

    pub fn session(&self, id: &str) -> Option<Arc<LiveSession>> {
        self.0.sessions.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Fitted world for a scene, built on first use off the async runtime.
    async fn world(&self, scene_id: &str) -> Result<Arc<World>, ApiError> {
        let scene = self
            .0
            .scenes
            .get(scene_id)
            .ok_or_else(|| ApiError::not_found(format!("unknown scene '{scene_id}'")))?;
        let mut worlds = self.0.worlds.lock().await;
        if let Some(w) = worlds.get(scene_id) {
            return Ok(w.clone());
        }
        let (scene, options) = ((**scene).clone(), self.0.envelope);
        let world = tokio::task::spawn_blocking(move || World::new(KinematicChain::fr3(), scene, options))
            .await
            .map_err(ApiError::internal)?
            .map_err(|e| ApiError::internal(format!("scene preparation failed: {e}")))?;
        let world = Arc::new(world);
        worlds.insert(scene_id.to_string(), world.clone());
        Ok(world)
    }

    /// Stops every session stepper and waits for their logs to be flushed.
    pub async fn shutdown(&self) {
        self.0.shutdown.send_replace(true);
        let handles: Vec<_> = std::mem::take(&mut *self.0.steppers.lock().unwrap_or_else(|e| e.into_inner()));
        for h in handles {
            if let Err(e) = h.await {
                tracing::error!("stepper task failed: {e}");
            }
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }

    fn not_found(message: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }

    fn from_sim(e: SimError) -> Self {
        match e {
            SimError::Semantic(e) => Self::new(StatusCode::BAD_GATEWAY, format!("context synthesis failed: {e}")),
            other => Self::internal(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub description: String,
    pub workspace: Aabb,
    pub objects: Vec<ObjectInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMesh {
    pub object_id: String,
    pub label: String,
    pub solids: Vec<TriMesh>,
    /// Evenly subsampled cloud points.
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeshes {
    pub scene_id: String,
    pub objects: Vec<ObstacleMesh>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub scene_id: String,
    #[serde(default)]
    pub object: Option<String>,
    #[serde(default)]
    pub chain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub ws_path: String,
    pub held_object: String,
    pub context: SemanticContext,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRequest {
    pub held_object: String,
}

fn objects(scene: &Scene) -> Vec<ObjectInfo> {
    scene
        .clouds
        .iter()
        .map(|c| ObjectInfo {
            object_id: c.object_id.clone(),
            label: c.label.clone(),
        })
        .collect()
}

async fn list_scenes(AxState(app): AxState<AppState>) -> Json<Vec<SceneSummary>> {
    Json(
        app.0
            .scenes
            .values()
            .map(|s| SceneSummary {
                scene_id: s.id().to_string(),
                description: s.manifest.description.clone(),
                workspace: s.workspace(),
                objects: objects(s),
            })
            .collect(),
    )
}

async fn scene_meshes(AxState(app): AxState<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SceneMeshes>, ApiError> {
    let world = app.world(&id).await?;
    let objects = world
        .obstacles
        .iter()
        .zip(&world.scene.clouds)
        .map(|(obs, cloud)| {
            let stride = cloud.points.len().div_ceil(MAX_MESH_POINTS).max(1);
            ObstacleMesh {
                object_id: obs.object_id.clone(),
                label: obs.label.clone(),
                solids: obs.solids.iter().map(|s| s.mesh(MESH_RES, MESH_RES)).collect(),
                points: cloud.points.iter().step_by(stride).map(|p| [p.x, p.y, p.z]).collect(),
            }
        })
        .collect();
    Ok(Json(SceneMeshes { scene_id: id, objects }))
}

async fn create_session(
    AxState(app): AxState<AppState>,
    Json(req): Json<SessionRequest>,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    match req.chain.as_deref() {
        None | Some("fr3") => {}
        Some(other) => return Err(ApiError::bad_request(format!("unsupported chain '{other}', only 'fr3' is available"))),
    }
    let world = app.world(&req.scene_id).await?;
    let held = req.object.unwrap_or_else(|| semfilter::sim::NO_OBJECT.to_string());
    let (config, client) = (app.0.session.clone(), app.0.client.clone());
    let (sim, warning) = tokio::task::spawn_blocking(move || -> Result<_, SimError> {
        let mut sim = SimSession::new(world, config)?;
        let (ctx, warning) = sim.context_for(&held, &client)?;
        sim.set_context(&held, ctx)?;
        sim.warnings.extend(warning.clone());
        Ok((sim, warning))
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::from_sim)?;

    let id = format!("s{}", app.0.next_session.fetch_add(1, Ordering::Relaxed));
    let created = SessionCreated {
        session_id: id.clone(),
        ws_path: format!("/ws/session/{id}"),
        held_object: sim.held_object.clone(),
        context: sim.context.clone(),
        warning,
    };
    let session = LiveSession::new(id.clone(), req.scene_id, sim, app.0.live.clone());
    let log = app.0.log_dir.as_ref().map(|d| d.join(format!("{id}.jsonl")));
    let handle = tokio::spawn(session.clone().run(log, app.0.shutdown.subscribe()));
    app.0.steppers.lock().unwrap_or_else(|e| e.into_inner()).push(handle);
    app.0.sessions.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), session);
    tracing::info!(session = %id, held = %created.held_object, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

/// Synthesizes and fits the new context without holding the session lock,
/// then swaps it in. On failure the session keeps its previous context.
async fn set_context(
    AxState(app): AxState<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ContextRequest>,
) -> Result<Json<ContextUpdate>, ApiError> {
    let session = app.session(&id).ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
    let snapshot = session.sim().clone();
    let client = app.0.client.clone();
    let label = req.held_object.clone();
    let (ctx, warning) = tokio::task::spawn_blocking(move || -> Result<_, SimError> {
        let (ctx, warning) = snapshot.context_for(&label, &client)?;
        // warms the world's envelope cache
        snapshot.world.envelopes(&ctx)?;
        Ok((ctx, warning))
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::from_sim)?;

    let update = {
        let mut sim = session.sim();
        sim.set_context(&req.held_object, ctx).map_err(ApiError::from_sim)?;
        sim.warnings.extend(warning.clone());
        ContextUpdate {
            held_object: sim.held_object.clone(),
            context: sim.context.clone(),
            envelopes: envelope_meshes(&sim.envelopes, &sim.context),
            warning,
        }
    };
    tracing::info!(session = %id, held = %update.held_object, "context changed");
    session.publish(Event::Context(Arc::new(update.clone())));
    Ok(Json(update))
}

async fn ws_session(
    ws: WebSocketUpgrade,
    AxState(app): AxState<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let session = app.session(&id).ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
    let shutdown = app.0.shutdown.subscribe();
    Ok(ws.on_upgrade(move |socket| connection(socket, session, shutdown)))
}

/// Per-connection outgoing sequence numbers.
struct Outbox<'a> {
    socket: &'a mut WebSocket,
    session: &'a LiveSession,
    seq: u64,
}

impl Outbox<'_> {
    async fn send(&mut self, body: ServerMessage) -> bool {
        self.seq += 1;
        let msg = Envelope {
            seq: self.seq,
            t_ms: self.session.t_ms(),
            body,
        };
        match serde_json::to_string(&msg) {
            Ok(text) => self.socket.send(Message::Text(text.into())).await.is_ok(),
            Err(e) => {
                tracing::error!("cannot encode message: {e}");
                false
            }
        }
    }

    async fn error(&mut self, err: WireError) -> bool {
        self.send(ServerMessage::Error(err)).await
    }
}

async fn connection(mut socket: WebSocket, session: Arc<LiveSession>, mut shutdown: watch::Receiver<bool>) {
    let (conn, role) = session.connect();
    tracing::info!(session = %session.id, conn, ?role, "client connected");
    let mut states = session.subscribe_state();
    let mut events = session.subscribe_events();
    let mut last_seq: Option<u64> = None;
    let mut out = Outbox {
        socket: &mut socket,
        session: &session,
        seq: 0,
    };
    let mut open = out.send(ServerMessage::Hello(session.hello(role))).await;
    while open {
        tokio::select! {
            incoming = out.socket.recv() => {
                let text = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        open = out.error(WireError::new(ErrorCode::Malformed, "binary frames are not supported")).await;
                        if role == Role::Driver {
                            session.stop();
                        }
                        continue;
                    }
                    Some(Ok(_)) => continue,
                };
                if role == Role::Observer {
                    open = out.error(WireError::new(ErrorCode::ReadOnly, "this connection observes; another client is driving")).await;
                    continue;
                }
                let parsed = wire::parse_client(text.as_str()).and_then(|cmd| match last_seq {
                    Some(prev) if cmd.seq <= prev => {
                        Err(WireError::new(ErrorCode::StaleSeq, format!("seq {} does not follow {prev}", cmd.seq)))
                    }
                    _ => Ok(cmd),
                });
                match parsed {
                    Ok(cmd) => {
                        last_seq = Some(cmd.seq);
                        session.command(cmd.body.v, cmd.body.w, cmd.body.deadman);
                    }
                    Err(err) => {
                        session.stop();
                        open = out.error(err).await;
                    }
                }
            }
            changed = states.changed() => {
                if changed.is_err() {
                    break;
                }
                let state = states.borrow_and_update().clone();
                if let Some(state) = state {
                    open = out.send(ServerMessage::State((*state).clone())).await;
                }
            }
            event = events.recv() => match event {
                Ok(Event::Context(update)) => open = out.send(ServerMessage::Context((*update).clone())).await,
                Ok(Event::Error(err)) => open = out.error(err).await,
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
            _ = live::stopped(&mut shutdown) => {
                let _ = out.socket.send(Message::Close(None)).await;
                break;
            }
        }
    }
    session.disconnect(conn);
    tracing::info!(session = %session.id, conn, "client disconnected");
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scene/{id}/meshes", get(scene_meshes))
        .route("/session", post(create_session))
        .route("/session/{id}/context", post(set_context))
        .route("/ws/session/{id}", get(ws_session))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then closes every socket and stops the
/// session steppers.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = state.clone();
    let signal = async move {
        shutdown.await;
        // lets open WebSockets close so the graceful drain can finish
        app.0.shutdown.send_replace(true);
    };
    axum::serve(listener, router(state.clone())).with_graceful_shutdown(signal).await?;
    state.shutdown().await;
    Ok(())
}
