//! Session-keyed chat service. Model parameters are shared read-only; each
//! session's dialogue state sits behind its own lock, so messages to one
//! session queue while other sessions proceed.

mod convert;
mod error;

use std::collections::HashMap;
use std::future::Future;
use std::sync::{Arc, Mutex as StdMutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::Mutex;

use css_api::{
    ActPrediction, ClassifyRequest, CreateSession, Health, MessageRequest, MessageResponse,
    SessionCreated, Transcript,
};
use css_core::dialogue_state::DialogueState;
use css_core::engine::ChatEngine;
use css_core::seq2seq::DecodeConfig;

pub use error::ApiError;
use error::ApiJson;

struct Session {
    state: DialogueState,
    decode: DecodeConfig,
}

type SessionHandle = Arc<Mutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    engine: Arc<ChatEngine>,
    sessions: Arc<StdMutex<HashMap<String, SessionHandle>>>,
}

impl AppState {
    pub fn new(engine: ChatEngine) -> Self {
        AppState {
            engine: Arc::new(engine),
            sessions: Arc::default(),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/session", post(create_session))
        .route("/v1/session/{id}/message", post(message))
        .route("/v1/session/{id}/transcript", get(transcript))
        .route("/v1/session/{id}/reset", post(reset))
        .route("/v1/classify", post(classify))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    engine: ChatEngine,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(AppState::new(engine)))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_mode: app.engine.seq2seq().mode().name().into(),
    })
}

/// The body is optional; an empty one takes the service's decode defaults.
async fn create_session(
    State(app): State<AppState>,
    body: Bytes,
) -> Result<Json<SessionCreated>, ApiError> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let decode = match req.decode {
        Some(k) => convert::decode_config(k)?,
        None => app.engine.decode_config().clone(),
    };
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        state: app.engine.new_state(),
        decode,
    };
    app.sessions
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    log::debug!("session {id} created");
    Ok(Json(SessionCreated { session_id: id }))
}

async fn message(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<MessageRequest>,
) -> Result<Json<MessageResponse>, ApiError> {
    if req.text.trim().is_empty() {
        return Err(ApiError::BadRequest("text must not be empty".into()));
    }
    let decode = req.decode.map(convert::decode_config).transpose()?;
    let mut session = app.session(&id)?.lock_owned().await;
    let engine = Arc::clone(&app.engine);
    let reply = tokio::task::spawn_blocking(move || {
        if let Some(d) = decode {
            session.decode = d;
        }
        let s = &mut *session;
        engine.reply(&mut s.state, &req.text, Some(&s.decode))
    })
    .await
    .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))??;
    Ok(Json(convert::message_response(reply)))
}

async fn transcript(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Transcript>, ApiError> {
    let session = app.session(&id)?;
    let s = session.lock().await;
    Ok(Json(convert::transcript(id, &s.state)))
}

async fn reset(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Transcript>, ApiError> {
    let session = app.session(&id)?;
    let mut s = session.lock().await;
    s.state.reset();
    Ok(Json(convert::transcript(id, &s.state)))
}

async fn classify(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<ClassifyRequest>,
) -> Result<Json<ActPrediction>, ApiError> {
    let engine = Arc::clone(&app.engine);
    let pred = tokio::task::spawn_blocking(move || engine.classify(&req.text))
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))??;
    pred.map(|p| Json(convert::act(&p)))
        .ok_or(ApiError::Unavailable("no context model loaded".into()))
}
