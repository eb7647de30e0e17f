//! Live sessions over HTTP and WebSocket.
//!
//! Routes:
//!
//! - `POST /sessions` creates a session and returns `{"session_id": ...}`.
//! - `GET /sessions/{id}/snapshot` returns the current scene state.
//! - `GET /sessions/{id}/metrics` returns the metrics report.
//! - `GET /sessions/{id}/ws` upgrades to the message protocol in
//!   [`protocol`]. The first frame is always a `SceneSnapshot`.

pub mod protocol;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::{broadcast, Mutex, RwLock};

use crate::engine::{EngineError, Session, SessionConfig};
use crate::geometry::Vec2;
use crate::layout::LayoutParams;
use crate::model::{IslandId, SceneState, TransitionMode};
use crate::organizer::{InferenceProvider, TopicConfig};
use crate::session_log::Durability;

pub use protocol::{ClientMessage, ServerMessage};

/// Deltas buffered per subscriber before it is resynced with a snapshot.
const BROADCAST_CAPACITY: usize = 256;

#[derive(Clone)]
pub struct HubConfig {
    pub topic: TopicConfig,
    pub params: LayoutParams,
    pub transition: TransitionMode,
    pub log_dir: Option<PathBuf>,
    pub durability: Durability,
    pub provider: Arc<dyn InferenceProvider>,
}

struct SessionSlot {
    session: Mutex<Session>,
    started: Instant,
    deltas: broadcast::Sender<Arc<ServerMessage>>,
}

impl SessionSlot {
    fn now(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Sends committed events to subscribers. Call with the session locked
    /// so deltas leave in seq order.
    fn publish(&self, events: Vec<crate::model::SessionEvent>) {
        if let Some(delta) = ServerMessage::delta(events) {
            // no receivers is fine
            let _ = self.deltas.send(Arc::new(delta));
        }
    }
}

/// Owns every live session. Sessions share nothing but the provider.
pub struct Hub {
    config: HubConfig,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    counter: AtomicU64,
}

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl HubError {
    pub fn code(&self) -> &'static str {
        match self {
            HubError::UnknownSession(_) => "UnknownSession",
            HubError::Engine(e) => e.code(),
        }
    }

    fn to_message(&self) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string())
    }
}

impl Hub {
    pub fn new(config: HubConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: RwLock::new(HashMap::new()),
            counter: AtomicU64::new(0),
        })
    }

    pub async fn create_session(&self) -> Result<String, HubError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0);
        let id = format!("{stamp}-{n}");
        let mut config = SessionConfig::new(self.config.topic.clone());
        config.params = self.config.params;
        config.transition = self.config.transition;
        config.durability = self.config.durability;
        config.log_path = self
            .config
            .log_dir
            .as_ref()
            .map(|dir| dir.join(format!("{id}.jsonl")));
        let session = Session::new(config)?;
        let (deltas, _) = broadcast::channel(BROADCAST_CAPACITY);
        let slot = Arc::new(SessionSlot {
            session: Mutex::new(session),
            started: Instant::now(),
            deltas,
        });
        self.sessions.write().await.insert(id.clone(), slot);
        tracing::info!(session = %id, "session created");
        Ok(id)
    }

    async fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, HubError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| HubError::UnknownSession(id.to_string()))
    }

    pub async fn snapshot(&self, id: &str) -> Result<SceneState, HubError> {
        Ok(self.slot(id).await?.session.lock().await.snapshot().clone())
    }

    pub async fn metrics(&self, id: &str) -> Result<crate::metrics::MetricsReport, HubError> {
        Ok(self.slot(id).await?.session.lock().await.metrics())
    }

    /// Snapshot plus a delta stream that starts right after it.
    pub async fn subscribe(
        &self,
        id: &str,
    ) -> Result<(SceneState, broadcast::Receiver<Arc<ServerMessage>>), HubError> {
        let slot = self.slot(id).await?;
        let session = slot.session.lock().await;
        Ok((session.snapshot().clone(), slot.deltas.subscribe()))
    }

    /// Processes one client message and returns the direct reply. Resulting
    /// deltas go to all subscribers. Categorization runs in the background
    /// after the `Ack`.
    pub async fn handle(&self, id: &str, message: ClientMessage) -> ServerMessage {
        match self.dispatch(id, message).await {
            Ok(seq) => ServerMessage::Ack { seq },
            Err(e) => e.to_message(),
        }
    }

    async fn dispatch(&self, id: &str, message: ClientMessage) -> Result<u64, HubError> {
        let slot = self.slot(id).await?;
        let mut session = slot.session.lock().await;
        let t = slot.now();
        let events = match message {
            ClientMessage::SubmitUtterance { transcript } => {
                let (pending, submitted) = session.submit(&transcript, t)?;
                let seq = submitted.seq;
                slot.publish(vec![submitted]);
                drop(session);
                let provider = self.config.provider.clone();
                let slot = slot.clone();
                tokio::spawn(async move {
                    let run = pending.clone();
                    let outcome =
                        match tokio::task::spawn_blocking(move || run.run(provider.as_ref())).await
                        {
                            Ok(outcome) => outcome,
                            Err(e) => Err(crate::organizer::OrganizeError::ProviderFailure(
                                e.to_string(),
                            )),
                        };
                    let mut session = slot.session.lock().await;
                    let t = slot.now();
                    match session.complete(&pending, outcome, t) {
                        Ok((_, events)) => slot.publish(events),
                        Err(e) => tracing::warn!(error = %e, "dropping inference result"),
                    }
                });
                return Ok(seq);
            }
            ClientMessage::Pose { x, y, heading } => session
                .pose(Vec2::new(x, y), heading, t)?
                .into_iter()
                .collect(),
            ClientMessage::DiveIn { island_id } => vec![session.dive_in(IslandId(island_id), t)?],
            ClientMessage::DiveOut => vec![session.dive_out(t)?],
            ClientMessage::Trigger { orb_id } => vec![session.trigger(IslandId(orb_id), t)?],
            ClientMessage::EndSession => vec![session.end(t)?],
        };
        slot.publish(events);
        Ok(session.snapshot().last_seq)
    }
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/ws", get(ws_upgrade))
        .with_state(hub)
}

fn error_response(e: HubError) -> Response {
    let status = match e {
        HubError::UnknownSession(_) => StatusCode::NOT_FOUND,
        HubError::Engine(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(e.to_message())).into_response()
}

async fn create_session(State(hub): State<Arc<Hub>>) -> Response {
    match hub.create_session().await {
        Ok(id) => (
            StatusCode::CREATED,
            Json(serde_json::json!({ "session_id": id })),
        )
            .into_response(),
        Err(e) => error_response(e),
    }
}

async fn snapshot(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.snapshot(&id).await {
        Ok(state) => Json(state).into_response(),
        Err(e) => error_response(e),
    }
}

async fn metrics(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.metrics(&id).await {
        Ok(report) => Json(report).into_response(),
        Err(e) => error_response(e),
    }
}

async fn ws_upgrade(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Response {
    match hub.subscribe(&id).await {
        Ok(sub) => ws.on_upgrade(move |socket| serve_socket(hub, id, socket, sub)),
        Err(e) => error_response(e),
    }
}

async fn send(socket: &mut WebSocket, message: &ServerMessage) -> bool {
    socket
        .send(Message::Text(message.to_json().into()))
        .await
        .is_ok()
}

async fn serve_socket(
    hub: Arc<Hub>,
    id: String,
    mut socket: WebSocket,
    (state, mut deltas): (SceneState, broadcast::Receiver<Arc<ServerMessage>>),
) {
    let mut seen = state.last_seq;
    if !send(
        &mut socket,
        &ServerMessage::SceneSnapshot {
            state: Box::new(state),
        },
    )
    .await
    {
        return;
    }
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(message) => hub.handle(&id, message).await,
                    Err(e) => ServerMessage::error("MalformedMessage", e.to_string()),
                };
                if !send(&mut socket, &reply).await {
                    break;
                }
            }
            delta = deltas.recv() => {
                match delta {
                    Ok(delta) => {
                        if let ServerMessage::SceneDelta { to_seq, .. } = delta.as_ref() {
                            if *to_seq <= seen {
                                continue;
                            }
                            seen = *to_seq;
                        }
                        if !send(&mut socket, &delta).await {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => {
                        // too slow: start over from a fresh snapshot
                        let Ok((state, rx)) = hub.subscribe(&id).await else { break };
                        deltas = rx;
                        seen = state.last_seq;
                        if !send(&mut socket, &ServerMessage::SceneSnapshot { state: Box::new(state) }).await {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(hub: Arc<Hub>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    // small frames: don't let Nagle hold deltas back
    let listener = axum::serve::ListenerExt::tap_io(listener, |tcp| {
        let _ = tcp.set_nodelay(true);
    });
    axum::serve(listener, router(hub)).await
}
