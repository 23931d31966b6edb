//! HTTP and WebSocket service for live deployment episodes.
//!
//! Every event an episode emits is appended to that episode's log, and
//! subscribers read the log from the start at their own pace. A slow
//! subscriber therefore never loses events and never stalls the episode.
//! The log is bounded by the episode's turn cap.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use autoskill::deployer::{run_deployment, DeployConfig, EpisodeIo, TimedEvent};
use autoskill::oracle::Oracle;
use autoskill::sim::{describe, Scene};
use autoskill::skilldsl::SkillLibrary;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;

/// Version of every JSON payload the service sends or accepts.
pub const SCHEMA_VERSION: u32 = 1;
pub const SCHEMA_HEADER: &str = "x-autoskill-schema";

pub type OracleFactory = Arc<dyn Fn() -> anyhow::Result<Oracle> + Send + Sync>;

struct Episode {
    id: u64,
    instruction: String,
    log: Mutex<Vec<TimedEvent>>,
    /// Number of events logged; bumps wake subscribers.
    len: watch::Sender<usize>,
    inbox: Mutex<Vec<String>>,
    outcome: Mutex<Option<(bool, String)>>,
}

impl Episode {
    fn running(&self) -> bool {
        self.outcome.lock().unwrap().is_none()
    }

    fn summary(&self) -> serde_json::Value {
        let outcome = self.outcome.lock().unwrap().clone();
        json!({
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "instruction": self.instruction,
            "status": if outcome.is_some() { "finished" } else { "running" },
            "success": outcome.as_ref().map(|o| o.0),
            "message": outcome.map(|o| o.1),
            "events": self.log.lock().unwrap().len(),
        })
    }
}

struct EpisodeChannel {
    episode: Arc<Episode>,
    snapshot: Arc<Mutex<Scene>>,
}

impl EpisodeIo for EpisodeChannel {
    fn emit(&mut self, e: &TimedEvent) {
        let mut log = self.episode.log.lock().unwrap();
        log.push(e.clone());
        self.episode.len.send_replace(log.len());
    }

    fn poll_user(&mut self) -> Option<String> {
        let mut inbox = self.episode.inbox.lock().unwrap();
        (!inbox.is_empty()).then(|| inbox.remove(0))
    }

    fn after_step(&mut self, _: usize, scene: &Scene) {
        *self.snapshot.lock().unwrap() = scene.clone();
    }
}

pub struct AppState {
    /// Latest scene; episodes continue from where the previous one left it.
    scene: Arc<Mutex<Scene>>,
    library: SkillLibrary,
    oracle: OracleFactory,
    config: DeployConfig,
    episodes: Mutex<HashMap<u64, Arc<Episode>>>,
    next_id: Mutex<u64>,
}

impl AppState {
    pub fn new(scene: Scene, library: SkillLibrary, oracle: OracleFactory, config: DeployConfig) -> Arc<Self> {
        Arc::new(AppState {
            scene: Arc::new(Mutex::new(scene)),
            library,
            oracle,
            config,
            episodes: Mutex::new(HashMap::new()),
            next_id: Mutex::new(1),
        })
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"schema": SCHEMA_VERSION, "error": message.into()}))).into_response()
}

async fn get_scene(State(s): State<Arc<AppState>>) -> Response {
    let scene = s.scene.lock().unwrap().clone();
    Json(json!({
        "schema": SCHEMA_VERSION,
        "scenario": scene.scenario,
        "bounds": scene.bounds,
        "state": scene.state(),
        "description": describe(&scene),
    }))
    .into_response()
}

async fn get_skills(State(s): State<Arc<AppState>>) -> Response {
    Json(json!({"schema": SCHEMA_VERSION, "library": s.library.to_json()})).into_response()
}

#[derive(Deserialize)]
struct StartEpisode {
    instruction: String,
}

async fn start_episode(State(s): State<Arc<AppState>>, body: Result<Json<StartEpisode>, JsonRejection>) -> Response {
    let Ok(Json(body)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected {\"instruction\": string}");
    };
    if body.instruction.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "instruction is empty");
    }
    let oracle = match (s.oracle)() {
        Ok(o) => o,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
    };
    let episode = {
        let mut episodes = s.episodes.lock().unwrap();
        if episodes.values().any(|e| e.running()) {
            return error(StatusCode::CONFLICT, "an episode is already running");
        }
        let mut next = s.next_id.lock().unwrap();
        let id = *next;
        *next += 1;
        let episode = Arc::new(Episode {
            id,
            instruction: body.instruction.clone(),
            log: Mutex::new(Vec::new()),
            len: watch::channel(0).0,
            inbox: Mutex::new(Vec::new()),
            outcome: Mutex::new(None),
        });
        episodes.insert(id, episode.clone());
        log::info!("episode {id} started: {}", body.instruction);
        episode
    };
    let state = s.clone();
    let ep = episode.clone();
    tokio::task::spawn_blocking(move || {
        let mut scene = state.scene.lock().unwrap().clone();
        let mut io = EpisodeChannel { episode: ep.clone(), snapshot: state.scene.clone() };
        let trace = run_deployment(&ep.instruction, &mut scene, &state.library, &oracle, &state.config, &mut io);
        *state.scene.lock().unwrap() = scene;
        let outcome = trace.finished().map(|(ok, m)| (ok, m.to_string())).unwrap_or((false, "no result".into()));
        log::info!("episode {} finished: success={} ({})", ep.id, outcome.0, outcome.1);
        *ep.outcome.lock().unwrap() = Some(outcome);
        // Wake subscribers waiting for the end of the stream.
        ep.len.send_modify(|_| {});
    });
    let id = episode.id;
    (StatusCode::CREATED, Json(json!({"schema": SCHEMA_VERSION, "id": id, "events": format!("/episodes/{id}/events")}))).into_response()
}

fn find(s: &AppState, id: u64) -> Option<Arc<Episode>> {
    s.episodes.lock().unwrap().get(&id).cloned()
}

#[derive(Deserialize)]
struct UserMessage {
    text: String,
}

async fn post_message(State(s): State<Arc<AppState>>, Path(id): Path<u64>, body: Result<Json<UserMessage>, JsonRejection>) -> Response {
    let Some(ep) = find(&s, id) else { return error(StatusCode::NOT_FOUND, format!("no episode {id}")) };
    let Ok(Json(msg)) = body else {
        return error(StatusCode::BAD_REQUEST, "expected {\"text\": string}");
    };
    if !ep.running() {
        return error(StatusCode::CONFLICT, "the episode has finished");
    }
    ep.inbox.lock().unwrap().push(msg.text);
    (StatusCode::ACCEPTED, Json(json!({"schema": SCHEMA_VERSION, "queued": true}))).into_response()
}

async fn get_episode(State(s): State<Arc<AppState>>, Path(id): Path<u64>) -> Response {
    match find(&s, id) {
        Some(ep) => Json(ep.summary()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("no episode {id}")),
    }
}

async fn events(State(s): State<Arc<AppState>>, Path(id): Path<u64>, ws: WebSocketUpgrade) -> Response {
    match find(&s, id) {
        Some(ep) => ws.on_upgrade(move |socket| stream_events(socket, ep)),
        None => error(StatusCode::NOT_FOUND, format!("no episode {id}")),
    }
}

/// Send the log from the beginning, then follow it until the episode ends.
async fn stream_events(mut socket: WebSocket, ep: Arc<Episode>) {
    let mut rx = ep.len.subscribe();
    let mut sent = 0;
    loop {
        let pending: Vec<String> = {
            let log = ep.log.lock().unwrap();
            log[sent..].iter().map(|e| serde_json::to_string(e).expect("event")).collect()
        };
        for text in pending {
            if socket.send(Message::Text(text.into())).await.is_err() {
                return;
            }
            sent += 1;
        }
        let done = !ep.running() && sent == ep.log.lock().unwrap().len();
        if done {
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
        if rx.changed().await.is_err() {
            return;
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scene", get(get_scene))
        .route("/skills", get(get_skills))
        .route("/episodes", post(start_episode))
        .route("/episodes/{id}", get(get_episode))
        .route("/episodes/{id}/message", post(post_message))
        .route("/episodes/{id}/events", get(events))
        .layer(axum::middleware::map_response(|mut r: Response| async move {
            r.headers_mut().insert(SCHEMA_HEADER, HeaderValue::from(SCHEMA_VERSION));
            r
        }))
        .with_state(state)
}

/// Bind and serve until the process is stopped. Prints the bound address.
pub async fn serve(state: Arc<AppState>, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
