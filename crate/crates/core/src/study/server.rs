use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Body;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::store::{ResponseLog, StoreError};
use super::{compute_stats, Response, StudyStats, Trial, TrialSet};
use crate::audio::{encode_wav, read_wav, Waveform};

/// Milliseconds since the Unix epoch.
pub type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

fn system_clock() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

const PLACEHOLDER: &str = "<!doctype html><title>stressbench study</title>\
<p>Study service is running. The browser client is served from the static directory.</p>";

/// Shared state behind the study endpoints.
pub struct StudyService {
    trials: TrialSet,
    by_id: HashMap<String, usize>,
    /// ref -> (trial index, audio path relative to the root)
    clips: HashMap<String, (usize, String)>,
    audio_root: PathBuf,
    static_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, String>>,
    log: Mutex<ResponseLog>,
    snapshot: RwLock<Arc<Vec<Response>>>,
    clock: Clock,
}

impl StudyService {
    pub fn new(trials: TrialSet, audio_root: &Path, log_path: &Path) -> Result<Self, StoreError> {
        let log = ResponseLog::open(log_path)?;
        let snapshot = RwLock::new(Arc::new(log.responses().to_vec()));
        let mut by_id = HashMap::new();
        let mut clips = HashMap::new();
        for (i, t) in trials.trials.iter().enumerate() {
            by_id.insert(t.trial_id.clone(), i);
            clips.insert(t.reference.audio_ref.clone(), (i, t.reference.path.clone()));
            for c in &t.candidates {
                clips.insert(c.clip.audio_ref.clone(), (i, c.clip.path.clone()));
            }
        }
        Ok(Self {
            trials,
            by_id,
            clips,
            audio_root: audio_root.to_path_buf(),
            static_dir: None,
            sessions: RwLock::new(HashMap::new()),
            log: Mutex::new(log),
            snapshot,
            clock: Box::new(system_clock),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_static_dir(mut self, dir: PathBuf) -> Self {
        self.static_dir = Some(dir);
        self
    }

    pub fn stats(&self) -> StudyStats {
        let snap = self.snapshot.read().expect("snapshot lock").clone();
        compute_stats(&snap, &self.trials.systems)
    }

    fn subject(&self, session: &str) -> Option<String> {
        self.sessions.read().expect("session lock").get(session).cloned()
    }

    fn progress(&self, subject: &str) -> Progress {
        let log = self.log.lock().expect("log lock");
        Progress {
            answered: log.answered_by(subject),
            total: self.trials.trials.len(),
        }
    }

    fn next_trial(&self, subject: &str) -> Option<&Trial> {
        let log = self.log.lock().expect("log lock");
        self.trials
            .trials
            .iter()
            .find(|t| !log.is_answered(subject, &t.trial_id))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    subject_id: String,
}

#[derive(Debug, Deserialize)]
struct Submit {
    trial_id: String,
    choice: String,
    #[serde(default)]
    response_ms: u64,
}

fn error(status: StatusCode, message: impl Into<String>) -> HttpResponse {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

type Shared = Arc<StudyService>;

async fn create_session(State(s): State<Shared>, Json(body): Json<CreateSession>) -> HttpResponse {
    let subject = body.subject_id.trim().to_string();
    if subject.is_empty() {
        return error(StatusCode::BAD_REQUEST, "subject_id must not be empty");
    }
    let id = uuid::Uuid::new_v4().to_string();
    s.sessions
        .write()
        .expect("session lock")
        .insert(id.clone(), subject.clone());
    let progress = s.progress(&subject);
    (
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "subject_id": subject, "progress": progress })),
    )
        .into_response()
}

async fn next(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> HttpResponse {
    let Some(subject) = s.subject(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown or expired session");
    };
    let progress = s.progress(&subject);
    match s.next_trial(&subject) {
        None => Json(json!({ "done": true, "progress": progress })).into_response(),
        Some(t) => {
            let candidates: Vec<_> = t
                .candidates
                .iter()
                .map(|c| json!({ "label": c.slot, "audio": format!("/audio/{}", c.clip.audio_ref) }))
                .collect();
            Json(json!({
                "done": false,
                "progress": progress,
                "trial": {
                    "trial_id": t.trial_id,
                    "reference": format!("/audio/{}", t.reference.audio_ref),
                    "candidates": candidates,
                },
            }))
            .into_response()
        }
    }
}

async fn submit(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<Submit>,
) -> HttpResponse {
    let Some(subject) = s.subject(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown or expired session");
    };
    let Some(&ti) = s.by_id.get(&body.trial_id) else {
        return error(StatusCode::BAD_REQUEST, format!("unknown trial {:?}", body.trial_id));
    };
    let trial = &s.trials.trials[ti];
    let Some(system) = trial.system_for_slot(&body.choice) else {
        return error(
            StatusCode::BAD_REQUEST,
            format!("choice {:?} is not one of A, B, C", body.choice),
        );
    };
    let record = Response {
        subject_id: subject.clone(),
        trial_id: trial.trial_id.clone(),
        dataset: trial.dataset,
        system: system.to_string(),
        response_ms: body.response_ms,
        timestamp_ms: (s.clock)(),
    };
    let result = {
        let mut log = s.log.lock().expect("log lock");
        let r = log.append(record);
        if r.is_ok() {
            *s.snapshot.write().expect("snapshot lock") = Arc::new(log.responses().to_vec());
        }
        r
    };
    match result {
        Ok(()) => Json(json!({ "accepted": true, "progress": s.progress(&subject) })).into_response(),
        Err(e @ StoreError::Duplicate { .. }) => error(StatusCode::CONFLICT, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn stats(State(s): State<Shared>) -> HttpResponse {
    Json(s.stats()).into_response()
}

fn word_clip(path: &Path, t: &Trial) -> Result<Vec<u8>, crate::audio::AudioError> {
    let w = read_wav(path)?;
    let a = w.index_of(t.start_s).min(w.len());
    let b = w.index_of(t.end_s).clamp(a, w.len());
    encode_wav(&Waveform::new(w.samples[a..b].to_vec(), w.sample_rate)?)
}

async fn audio(State(s): State<Shared>, UrlPath(r): UrlPath<String>) -> HttpResponse {
    let Some((ti, rel)) = s.clips.get(&r).cloned() else {
        return error(StatusCode::NOT_FOUND, format!("unknown audio ref {r:?}"));
    };
    let path = s.audio_root.join(rel);
    let s2 = s.clone();
    let bytes = tokio::task::spawn_blocking(move || word_clip(&path, &s2.trials.trials[ti])).await;
    match bytes {
        Ok(Ok(b)) => ([(header::CONTENT_TYPE, "audio/wav")], Body::from(b)).into_response(),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_file(s: &StudyService, rel: &str) -> HttpResponse {
    let Some(dir) = &s.static_dir else {
        if rel == "index.html" {
            return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], PLACEHOLDER).into_response();
        }
        return error(StatusCode::NOT_FOUND, "not found");
    };
    if rel.split('/').any(|c| c == ".." || c.is_empty()) {
        return error(StatusCode::NOT_FOUND, "not found");
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(b) => ([(header::CONTENT_TYPE, content_type(&path))], b).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found"),
    }
}

async fn index(State(s): State<Shared>) -> HttpResponse {
    static_file(&s, "index.html").await
}

async fn assets(State(s): State<Shared>, UrlPath(rel): UrlPath<String>) -> HttpResponse {
    static_file(&s, &rel).await
}

pub fn router(service: Arc<StudyService>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/static/{*path}", get(assets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/responses", post(submit))
        .route("/stats", get(stats))
        .route("/audio/{ref}", get(audio))
        .with_state(service)
}
