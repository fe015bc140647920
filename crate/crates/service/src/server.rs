//! HTTP API for human listener sessions.
//!
//! Routes, all JSON unless noted:
//!
//! | method | path | body |
//! |---|---|---|
//! | POST | `/v1/sessions` | `{participant}` |
//! | GET | `/v1/sessions/{id}/next` | |
//! | POST | `/v1/sessions/{id}/guess` | `{round, position}`, optional `Idempotency-Key` header |
//! | POST | `/v1/sessions/{id}/ratings` | `{round, clarity?, creativity?}` |
//! | GET | `/v1/sessions/{id}/summary` | |
//! | GET | `/v1/images/{card_id}` | image bytes |
//! | GET | `/v1/health` | |

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dixit_core::agents::remote::mime_for;
use dixit_core::benchkit::BenchFile;
use dixit_core::engine::CardId;
use dixit_core::ledger::now_ms;
use dixit_core::metrics;
use dixit_core::rng::{self, Lane};
use dixit_core::{corpus, tournament};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::CliError;

#[derive(Debug, Clone)]
pub enum RoundSource {
    /// A tournament manifest.
    Tournament(PathBuf),
    /// A bench file.
    Bench(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub source: RoundSource,
    pub corpus: Option<PathBuf>,
    pub rounds_per_session: usize,
    pub seed: u64,
    pub sessions_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
}

/// A round a participant can be shown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HumanRound {
    /// Where the round came from, e.g. `match 3 round 7`.
    pub source: String,
    pub clue: String,
    pub options: Vec<CardId>,
    /// One-based.
    pub target_position: usize,
}

pub fn rounds_from_manifest(path: &Path) -> Result<Vec<HumanRound>, CliError> {
    let (_, results) = tournament::load_tournament(path)?;
    let mut out = Vec::new();
    for m in &results {
        for r in &m.records {
            out.push(HumanRound {
                source: format!("match {} round {}", m.match_id, r.round_index),
                clue: r.clue.clone(),
                options: r.candidate_order.clone(),
                target_position: usize::from(r.target_position().unwrap_or(0)),
            });
        }
    }
    Ok(out)
}

pub fn rounds_from_bench(path: &Path) -> Result<Vec<HumanRound>, CliError> {
    let bench = BenchFile::load(path)?;
    Ok(bench
        .items
        .iter()
        .map(|i| HumanRound {
            source: format!("bench item {}", i.item_id),
            clue: i.clue.clone(),
            options: i.option_order.clone(),
            target_position: i.target_position(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuessResponse {
    pub round: usize,
    pub position: usize,
    pub correct: bool,
    pub target_position: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Rating {
    clarity: Option<i64>,
    creativity: Option<i64>,
}

struct Session {
    id: String,
    participant: String,
    /// Indices into `AppState::rounds`, in presentation order.
    queue: Vec<usize>,
    served: BTreeSet<usize>,
    answers: BTreeMap<usize, GuessResponse>,
    ratings: BTreeMap<usize, Rating>,
    idempotency: HashMap<String, GuessResponse>,
    ledger: PathBuf,
}

impl Session {
    fn log(&self, event: &str, mut fields: Value) -> Result<(), ApiError> {
        fields["event"] = json!(event);
        fields["session_id"] = json!(self.id);
        fields["at_ms"] = json!(now_ms());
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.ledger)
            .map_err(ApiError::storage)?;
        writeln!(f, "{fields}").map_err(ApiError::storage)?;
        f.sync_data().map_err(ApiError::storage)
    }

    fn ordinal(&self, round: usize) -> Result<usize, ApiError> {
        if round == 0 || round > self.queue.len() {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "UnknownRound",
                format!("round {round} is not part of this session (1..={})", self.queue.len()),
            ));
        }
        Ok(round)
    }
}

pub struct AppState {
    rounds: Vec<HumanRound>,
    images: BTreeMap<CardId, PathBuf>,
    rounds_per_session: usize,
    seed: u64,
    sessions_dir: PathBuf,
    static_dir: Option<PathBuf>,
    next_ordinal: AtomicU64,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
}

impl AppState {
    pub fn new(
        rounds: Vec<HumanRound>,
        images: BTreeMap<CardId, PathBuf>,
        rounds_per_session: usize,
        seed: u64,
        sessions_dir: PathBuf,
    ) -> Result<Arc<Self>, CliError> {
        if rounds.is_empty() {
            return Err(CliError::config("no rounds to serve"));
        }
        if rounds_per_session == 0 {
            return Err(CliError::config("rounds_per_session must be positive"));
        }
        std::fs::create_dir_all(&sessions_dir)?;
        Ok(Arc::new(AppState {
            rounds,
            images,
            rounds_per_session,
            seed,
            sessions_dir,
            static_dir: None,
            next_ordinal: AtomicU64::new(0),
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    pub fn load(options: ServeOptions) -> Result<Arc<Self>, CliError> {
        let rounds = match &options.source {
            RoundSource::Tournament(p) => rounds_from_manifest(p)?,
            RoundSource::Bench(p) => rounds_from_bench(p)?,
        };
        let images = match &options.corpus {
            Some(dir) => corpus::load_corpus(dir)?
                .into_iter()
                .map(|c| (c.id, PathBuf::from(c.asset_ref)))
                .collect(),
            None => BTreeMap::new(),
        };
        let state = AppState::new(rounds, images, options.rounds_per_session, options.seed, options.sessions_dir)?;
        let mut state = Arc::try_unwrap(state).map_err(|_| CliError::new("ServeError", "state shared too early"))?;
        state.static_dir = options.static_dir;
        Ok(Arc::new(state))
    }

    pub fn ledger_path(&self, session_id: &str) -> PathBuf {
        self.sessions_dir.join(format!("session-{session_id}.jsonl"))
    }

    fn session(&self, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn storage(e: std::io::Error) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.kind, "message": self.message}))).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/v1/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/next", get(next_round))
        .route("/v1/sessions/{id}/guess", post(submit_guess))
        .route("/v1/sessions/{id}/ratings", post(submit_ratings))
        .route("/v1/sessions/{id}/summary", get(summary))
        .route("/v1/images/{card_id}", get(image));
    let api = match &state.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    participant: String,
}

async fn create_session(State(state): State<Arc<AppState>>, Json(body): Json<CreateSession>) -> Result<Response, ApiError> {
    let alias = body.participant.trim();
    if alias.is_empty() || alias.len() > 64 {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidParticipant",
            "participant alias must be 1-64 characters",
        ));
    }
    let ordinal = state.next_ordinal.fetch_add(1, Ordering::SeqCst);
    let mut rng = rng::stream(state.seed, ordinal, Lane::Session);
    let n = state.rounds_per_session.min(state.rounds.len());
    let queue = rand::seq::index::sample(&mut rng, state.rounds.len(), n).into_vec();
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session {
        id: id.clone(),
        participant: alias.to_string(),
        queue,
        served: BTreeSet::new(),
        answers: BTreeMap::new(),
        ratings: BTreeMap::new(),
        idempotency: HashMap::new(),
        ledger: state.ledger_path(&id),
    };
    session.log(
        "created",
        json!({"participant": session.participant, "ordinal": ordinal, "rounds": session.queue.len(),
               "sources": session.queue.iter().map(|i| &state.rounds[*i].source).collect::<Vec<_>>()}),
    )?;
    let n_rounds = session.queue.len();
    state
        .sessions
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "n_rounds": n_rounds}))).into_response())
}

/// The round in play, without any hint of which option is the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundView {
    pub session_id: String,
    pub round: usize,
    pub of: usize,
    pub clue: String,
    pub candidates: Vec<CandidateView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateView {
    pub position: usize,
    pub image_url: String,
}

async fn next_round(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    let Some(round) = (1..=s.queue.len()).find(|r| !s.answers.contains_key(r)) else {
        return Ok(Json(json!({"session_id": id, "done": true, "of": s.queue.len()})).into_response());
    };
    let hr = &state.rounds[s.queue[round - 1]];
    if s.served.insert(round) {
        s.log("served", json!({"round": round, "source": hr.source}))?;
    }
    let view = RoundView {
        session_id: id,
        round,
        of: s.queue.len(),
        clue: hr.clue.clone(),
        candidates: hr
            .options
            .iter()
            .enumerate()
            .map(|(i, card)| CandidateView {
                position: i + 1,
                image_url: format!("/v1/images/{card}"),
            })
            .collect(),
    };
    Ok(Json(view).into_response())
}

#[derive(Debug, Deserialize)]
struct GuessBody {
    round: usize,
    position: usize,
}

async fn submit_guess(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    Json(body): Json<GuessBody>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    if let Some(previous) = key.as_ref().and_then(|k| s.idempotency.get(k)) {
        return Ok(Json(previous.clone()).into_response());
    }
    let round = s.ordinal(body.round)?;
    if s.answers.contains_key(&round) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "RoundAlreadyAnswered",
            format!("round {round} already has a guess"),
        ));
    }
    if !s.served.contains(&round) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "RoundNotServed",
            format!("round {round} has not been shown yet"),
        ));
    }
    let hr = &state.rounds[s.queue[round - 1]];
    if body.position == 0 || body.position > hr.options.len() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "PositionOutOfRange",
            format!("position must be in 1..={}", hr.options.len()),
        ));
    }
    let response = GuessResponse {
        round,
        position: body.position,
        correct: body.position == hr.target_position,
        target_position: hr.target_position,
    };
    s.log(
        "guess",
        json!({"round": round, "source": hr.source, "position": body.position,
               "correct": response.correct, "target_position": hr.target_position}),
    )?;
    s.answers.insert(round, response.clone());
    if let Some(k) = key {
        s.idempotency.insert(k, response.clone());
    }
    Ok(Json(response).into_response())
}

#[derive(Debug, Deserialize)]
struct RatingBody {
    round: usize,
    clarity: Option<i64>,
    creativity: Option<i64>,
}

async fn submit_ratings(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<RatingBody>,
) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    let round = s.ordinal(body.round)?;
    for (name, v) in [("clarity", body.clarity), ("creativity", body.creativity)] {
        if let Some(v) = v.filter(|v| !(1..=5).contains(v)) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "RatingOutOfRange",
                format!("{name} rating {v} is outside 1..=5"),
            ));
        }
    }
    if body.clarity.is_none() && body.creativity.is_none() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "EmptyRating",
            "give clarity, creativity or both",
        ));
    }
    if !s.answers.contains_key(&round) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "RoundNotAnswered",
            format!("guess round {round} before rating it"),
        ));
    }
    if s.ratings.contains_key(&round) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "RoundAlreadyRated",
            format!("round {round} is already rated"),
        ));
    }
    let rating = Rating {
        clarity: body.clarity,
        creativity: body.creativity,
    };
    let source = &state.rounds[s.queue[round - 1]].source;
    s.log(
        "rating",
        json!({"round": round, "source": source, "clarity": rating.clarity, "creativity": rating.creativity}),
    )?;
    s.ratings.insert(round, rating);
    Ok(Json(json!({"round": round, "accepted": true})).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub participant: String,
    pub n_rounds: usize,
    pub answered: usize,
    pub correct: usize,
    /// Percentage of answered rounds; `None` before the first guess.
    pub accuracy: Option<f64>,
    pub rating_counts: RatingCounts,
    pub clarity_index: Option<f64>,
    pub creativity_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingCounts {
    /// Count per rating value 1..=5.
    pub clarity: BTreeMap<i64, usize>,
    pub creativity: BTreeMap<i64, usize>,
}

pub fn accuracy(answered: usize, correct: usize) -> Option<f64> {
    (answered > 0).then(|| 100.0 * correct as f64 / answered as f64)
}

async fn summary(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionSummary>, ApiError> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    let correct = s.answers.values().filter(|a| a.correct).count();
    let clarity: Vec<i64> = s.ratings.values().filter_map(|r| r.clarity).collect();
    let creativity: Vec<i64> = s.ratings.values().filter_map(|r| r.creativity).collect();
    let mut counts = RatingCounts::default();
    for v in &clarity {
        *counts.clarity.entry(*v).or_default() += 1;
    }
    for v in &creativity {
        *counts.creativity.entry(*v).or_default() += 1;
    }
    Ok(Json(SessionSummary {
        session_id: s.id.clone(),
        participant: s.participant.clone(),
        n_rounds: s.queue.len(),
        answered: s.answers.len(),
        correct,
        accuracy: accuracy(s.answers.len(), correct),
        rating_counts: counts,
        clarity_index: metrics::clarity_index(&clarity).ok(),
        creativity_score: metrics::creativity_score(&creativity).ok(),
    }))
}

async fn image(State(state): State<Arc<AppState>>, UrlPath(card_id): UrlPath<CardId>) -> Result<Response, ApiError> {
    let path = state
        .images
        .get(&card_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownImage", format!("no image for card {card_id}")))?;
    let bytes = tokio::fs::read(path).await.map_err(ApiError::storage)?;
    let mime = mime_for(&path.to_string_lossy());
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

/// Accuracy recomputed from a session ledger's guess events.
pub fn ledger_accuracy(path: &Path) -> Result<Option<f64>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let (mut answered, mut correct) = (0, 0);
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line).map_err(|e| CliError::new("SchemaViolation", e.to_string()))?;
        if v["event"] == "guess" {
            answered += 1;
            correct += usize::from(v["correct"].as_bool().unwrap_or(false));
        }
    }
    Ok(accuracy(answered, correct))
}
