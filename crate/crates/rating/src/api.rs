use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{RatingError, Result};
use crate::journal::{Journal, RatingRecord};
use crate::playlist::{Playlists, PARTS, SESSIONS};

/// File the orchestrator writes per run with per-frame completeness.
pub const RECEIVED_MANIFEST: &str = "received.jsonl";
pub const JOURNAL_FILE: &str = "ratings.jsonl";

pub struct AppState {
    dataset: PathBuf,
    playlists: Playlists,
    journal: Mutex<Journal>,
}

impl AppState {
    pub fn new(dataset: impl Into<PathBuf>, playlists: Playlists, journal: Journal) -> Self {
        AppState {
            dataset: dataset.into(),
            playlists,
            journal: Mutex::new(journal),
        }
    }

    /// Loads the playlists of `dataset` and opens the journal, by default
    /// `dataset/ratings.jsonl`.
    pub fn open(dataset: impl Into<PathBuf>, journal: Option<PathBuf>) -> Result<Self> {
        let dataset = dataset.into();
        let playlists = Playlists::load(&dataset)?;
        let journal = Journal::open(journal.unwrap_or_else(|| dataset.join(JOURNAL_FILE)))?;
        Ok(Self::new(dataset, playlists, journal))
    }

    pub fn playlists(&self) -> &Playlists {
        &self.playlists
    }

    fn journal(&self) -> std::sync::MutexGuard<'_, Journal> {
        // A panic mid-append cannot leave the table ahead of the file.
        self.journal.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions/{session}/parts/{part}/playlist", get(playlist))
        .route("/training/playlist", get(training_playlist))
        .route("/media/{run_id}", get(media))
        .route("/ratings", post(post_rating))
        .route("/ratings/export", get(export))
        .route("/progress/{rater_id}", get(progress))
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PlaylistItem {
    pub position: usize,
    pub run_id: String,
    pub media: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PlaylistResponse {
    pub session: Option<u8>,
    pub part: Option<u8>,
    pub training: bool,
    pub items: Vec<PlaylistItem>,
}

fn items(names: &[String]) -> Vec<PlaylistItem> {
    names
        .iter()
        .enumerate()
        .map(|(position, run_id)| PlaylistItem {
            position,
            run_id: run_id.clone(),
            media: format!("/media/{run_id}"),
        })
        .collect()
}

fn part_names(state: &AppState, session: u8, part: u8) -> Result<&[String]> {
    state
        .playlists
        .part(session, part)
        .ok_or_else(|| RatingError::NotFound(format!("session {session} part {part}")))
}

// Path segments arrive as strings so that `/sessions/x/...` is a 404 like any
// other unknown session rather than an extractor error.
fn parse_index(raw: &str, what: &str, max: u8) -> Result<u8> {
    raw.parse::<u8>()
        .ok()
        .filter(|v| (1..=max).contains(v))
        .ok_or_else(|| RatingError::NotFound(format!("{what} {raw}")))
}

async fn playlist(
    State(state): State<Arc<AppState>>,
    Path((session, part)): Path<(String, String)>,
) -> Result<Json<PlaylistResponse>> {
    let session = parse_index(&session, "session", SESSIONS)?;
    let part = parse_index(&part, "part", PARTS)?;
    Ok(Json(PlaylistResponse {
        session: Some(session),
        part: Some(part),
        training: false,
        items: items(part_names(&state, session, part)?),
    }))
}

async fn training_playlist(State(state): State<Arc<AppState>>) -> Json<PlaylistResponse> {
    Json(PlaylistResponse {
        session: None,
        part: None,
        training: true,
        items: items(&state.playlists.training),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MediaResponse {
    pub run_id: String,
    pub frames: Vec<Value>,
    pub complete: usize,
    pub partial: usize,
    pub missing: usize,
}

async fn media(State(state): State<Arc<AppState>>, Path(run_id): Path<String>) -> Result<Json<MediaResponse>> {
    // Only names from a playlist are served, which also keeps paths inside the dataset.
    if !state.playlists.contains_run(&run_id) {
        return Err(RatingError::NotFound(format!("run {run_id}")));
    }
    let path = state.dataset.join(&run_id).join(RECEIVED_MANIFEST);
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|e| RatingError::NotFound(format!("media for {run_id}: {e}")))?;
    let frames = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<Vec<Value>, _>>()?;
    let flag = |f: &Value, k: &str| f.get(k).and_then(Value::as_bool).unwrap_or(false);
    let complete = frames.iter().filter(|f| flag(f, "complete")).count();
    let received = frames.iter().filter(|f| flag(f, "received")).count();
    Ok(Json(MediaResponse {
        run_id,
        complete,
        partial: received - complete,
        missing: frames.len() - received,
        frames,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatingRequest {
    pub rater_id: String,
    pub run_id: String,
    #[serde(default)]
    pub session: Option<u8>,
    #[serde(default)]
    pub part: Option<u8>,
    pub position: usize,
    pub score: i64,
    #[serde(default)]
    pub training: bool,
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn validate(state: &AppState, req: &RatingRequest) -> Result<RatingRecord> {
    let rater_id = req.rater_id.trim();
    if rater_id.is_empty() {
        return Err(RatingError::Invalid("rater_id is empty".into()));
    }
    let names = if req.training {
        if req.session.is_some() || req.part.is_some() {
            return Err(RatingError::Invalid("training ratings carry no session or part".into()));
        }
        &state.playlists.training[..]
    } else {
        let (Some(session), Some(part)) = (req.session, req.part) else {
            return Err(RatingError::Invalid("session and part are required".into()));
        };
        if !(1..=SESSIONS).contains(&session) || !(1..=PARTS).contains(&part) {
            return Err(RatingError::NotFound(format!("session {session} part {part}")));
        }
        part_names(state, session, part)?
    };
    if !(1..=5).contains(&req.score) {
        return Err(RatingError::Invalid(format!("score {} is outside 1..5", req.score)));
    }
    if names.get(req.position) != Some(&req.run_id) {
        return Err(RatingError::Invalid(format!(
            "{} is not at position {} of this playlist",
            req.run_id, req.position
        )));
    }
    Ok(RatingRecord {
        run_id: req.run_id.clone(),
        session: req.session,
        part: req.part,
        position: req.position,
        score: req.score as u8,
        rated_at: now_millis(),
        rater_id: rater_id.to_string(),
        training: req.training,
    })
}

async fn post_rating(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RatingRequest>,
) -> Result<(StatusCode, Json<RatingRecord>)> {
    let record = validate(&state, &req)?;
    state.journal().append(record.clone())?;
    Ok((StatusCode::CREATED, Json(record)))
}

/// Non-training ratings in journal order.
async fn export(State(state): State<Arc<AppState>>) -> Json<Vec<RatingRecord>> {
    let journal = state.journal();
    Json(
        journal
            .table()
            .records()
            .iter()
            .filter(|r| !r.training)
            .cloned()
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PartProgress {
    pub session: u8,
    pub part: u8,
    pub rated: usize,
    pub total: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Progress {
    pub rater_id: String,
    pub parts: Vec<PartProgress>,
    pub training_rated: usize,
    pub training_total: usize,
    pub rated: usize,
    pub total: usize,
}

async fn progress(State(state): State<Arc<AppState>>, Path(rater_id): Path<String>) -> Json<Progress> {
    let journal = state.journal();
    let mine: Vec<&RatingRecord> = journal
        .table()
        .records()
        .iter()
        .filter(|r| r.rater_id == rater_id)
        .collect();
    let parts: Vec<PartProgress> = state
        .playlists
        .parts
        .iter()
        .map(|(&(session, part), names)| PartProgress {
            session,
            part,
            rated: mine
                .iter()
                .filter(|r| !r.training && r.session == Some(session) && r.part == Some(part))
                .count(),
            total: names.len(),
        })
        .collect();
    Json(Progress {
        rated: parts.iter().map(|p| p.rated).sum(),
        total: state.playlists.total(),
        training_rated: mine.iter().filter(|r| r.training).count(),
        training_total: state.playlists.training.len(),
        rater_id,
        parts,
    })
}

/// Serves the rating API on `addr` until the process is stopped.
pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}
