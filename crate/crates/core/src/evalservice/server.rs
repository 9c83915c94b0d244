use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use super::store::{RatingStore, ScreenSubmission, SystemScore};
use crate::error::{Error, Result};
use crate::evalstats::{ListenerSession, SessionPlan, MAX_SCORE};

pub const API_VERSION: u32 = 1;

pub struct ServiceConfig {
    pub plan: SessionPlan,
    /// Root that every `audio_ref` in the plan is relative to.
    pub audio_dir: PathBuf,
    pub ratings_path: PathBuf,
}

pub struct Service {
    plan: SessionPlan,
    audio: HashMap<String, PathBuf>,
    by_token: HashMap<String, usize>,
    store: Mutex<RatingStore>,
}


impl Service {
    /// Validates that every planned stimulus has audio and opens the store.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        let ServiceConfig { plan, audio_dir, ratings_path } = config;
        let mut audio = HashMap::new();
        let mut missing = Vec::new();
        for session in &plan.sessions {
            for screen in &session.screens {
                let reference = [(&screen.reference_handle, &screen.reference_audio_ref)];
                let stimuli = screen.stimuli.iter().map(|s| (&s.handle, &s.audio_ref));
                for (handle, audio_ref) in reference.into_iter().chain(stimuli) {
                    let path = audio_dir.join(audio_ref);
                    if !path.is_file() && !missing.contains(&path) {
                        missing.push(path.clone());
                    }
                    audio.insert(handle.clone(), path);
                }
            }
        }
        if !missing.is_empty() {
            missing.sort();
            return Err(Error::MissingFiles {
                message: format!("{} stimulus audio files not found", missing.len()),
                paths: missing,
            });
        }
        let by_token = plan.sessions.iter().enumerate().map(|(i, s)| (s.token.clone(), i)).collect();
        let store = RatingStore::open(ratings_path)?;
        Ok(Self { plan, audio, by_token, store: Mutex::new(store) })
    }

    fn session(&self, token: &str) -> Option<&ListenerSession> {
        self.by_token.get(token).map(|&i| &self.plan.sessions[i])
    }

    fn next_screen(session: &ListenerSession, store: &RatingStore) -> Option<usize> {
        (0..session.screens.len()).find(|&i| !store.is_submitted(&session.listener_id, i))
    }
}

fn api_error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "v": API_VERSION, "error": message.into() }))).into_response()
}

fn audio_url(handle: &str) -> String {
    format!("/api/audio/{handle}")
}

fn screen_json(session: &ListenerSession, index: usize) -> serde_json::Value {
    let screen = &session.screens[index];
    json!({
        "v": API_VERSION,
        "complete": false,
        "screen_index": index,
        "total_screens": session.screens.len(),
        "utterance_ref": screen.reference_handle,
        "reference_audio_url": audio_url(&screen.reference_handle),
        "stimuli": screen.stimuli.iter()
            .map(|s| json!({ "handle": s.handle, "audio_url": audio_url(&s.handle) }))
            .collect::<Vec<_>>(),
    })
}

async fn get_session(State(svc): State<Arc<Service>>, UrlPath(token): UrlPath<String>) -> Response {
    let Some(session) = svc.session(&token) else {
        return api_error(StatusCode::NOT_FOUND, "unknown session token");
    };
    let store = svc.store.lock().await;
    match Service::next_screen(session, &store) {
        Some(i) => Json(screen_json(session, i)).into_response(),
        None => Json(json!({
            "v": API_VERSION,
            "complete": true,
            "completion_code": session.completion_code,
        }))
        .into_response(),
    }
}

async fn get_audio(State(svc): State<Arc<Service>>, UrlPath(handle): UrlPath<String>) -> Response {
    let Some(path) = svc.audio.get(&handle) else {
        return api_error(StatusCode::NOT_FOUND, "unknown stimulus handle");
    };
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response(),
        Err(e) => {
            log::error!("reading {}: {e}", path.display());
            api_error(StatusCode::INTERNAL_SERVER_ERROR, "stimulus audio unavailable")
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HandleScore {
    pub handle: String,
    pub score: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingSubmission {
    pub v: u32,
    pub listener_token: String,
    pub screen_index: usize,
    pub scores: Vec<HandleScore>,
}

async fn post_ratings(
    State(svc): State<Arc<Service>>,
    body: std::result::Result<Json<RatingSubmission>, JsonRejection>,
) -> Response {
    // Fractional or out-of-range scores fail here, before any state is read.
    let sub = match body {
        Ok(Json(sub)) => sub,
        Err(rejection) => return api_error(StatusCode::BAD_REQUEST, rejection.body_text()),
    };
    if sub.v != API_VERSION {
        return api_error(StatusCode::BAD_REQUEST, format!("unsupported API version {}", sub.v));
    }
    let Some(session) = svc.session(&sub.listener_token) else {
        return api_error(StatusCode::NOT_FOUND, "unknown session token");
    };
    let Some(screen) = session.screens.get(sub.screen_index) else {
        return api_error(StatusCode::BAD_REQUEST, format!("screen {} does not exist", sub.screen_index));
    };
    let mut ratings = Vec::with_capacity(screen.stimuli.len());
    for stimulus in &screen.stimuli {
        let mut matches = sub.scores.iter().filter(|s| s.handle == stimulus.handle);
        let (Some(s), None) = (matches.next(), matches.next()) else {
            return api_error(StatusCode::BAD_REQUEST, "every stimulus on the screen needs exactly one score");
        };
        if s.score > MAX_SCORE {
            return api_error(StatusCode::BAD_REQUEST, format!("score {} outside [0, {MAX_SCORE}]", s.score));
        }
        ratings.push(SystemScore { system_id: stimulus.system_id.clone(), score: s.score });
    }
    if sub.scores.len() != screen.stimuli.len() {
        return api_error(StatusCode::BAD_REQUEST, "scores include handles not on this screen");
    }

    let mut store = svc.store.lock().await;
    let next = Service::next_screen(session, &store);
    if next != Some(sub.screen_index) {
        return (
            StatusCode::CONFLICT,
            Json(json!({
                "v": API_VERSION,
                "error": "screen already submitted or out of order",
                "next_screen_index": next,
            })),
        )
            .into_response();
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    let record = ScreenSubmission {
        v: API_VERSION,
        listener_id: session.listener_id.clone(),
        screen_index: sub.screen_index,
        utterance_id: screen.utterance_id.clone(),
        timestamp,
        ratings,
    };
    if let Err(e) = store.append(&record) {
        log::error!("appending to {}: {e}", store.path().display());
        return api_error(StatusCode::INTERNAL_SERVER_ERROR, "could not persist ratings");
    }
    Json(json!({
        "v": API_VERSION,
        "accepted": record.ratings.len(),
        "next_screen_index": Service::next_screen(session, &store),
    }))
    .into_response()
}

async fn get_progress(State(svc): State<Arc<Service>>) -> Response {
    let store = svc.store.lock().await;
    let total: usize = svc.plan.sessions.iter().map(|s| s.screens.len()).sum();
    let complete = svc
        .plan
        .sessions
        .iter()
        .filter(|s| Service::next_screen(s, &store).is_none())
        .count();
    Json(json!({
        "v": API_VERSION,
        "listeners": svc.plan.sessions.len(),
        "listeners_complete": complete,
        "screens_total": total,
        "screens_submitted": store.submitted_count(),
    }))
    .into_response()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/session/{token}", get(get_session))
        .route("/api/audio/{handle}", get(get_audio))
        .route("/api/ratings", post(post_ratings))
        .route("/api/progress", get(get_progress))
        .with_state(service)
}

/// Serves until Ctrl-C. Pass port 0 to pick a free port; the bound address
/// is logged and printed on stdout.
pub async fn serve(service: Service, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    log::info!("listening on http://{local}");
    println!("listening on http://{local}");
    axum::serve(listener, router(Arc::new(service)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
