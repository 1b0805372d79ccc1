//! HTTP service for a pair-comparison session.
//!
//! Judgments are appended to a JSON-lines file. The file, the in-memory
//! list and the duplicate check share one lock, so appends are serialized
//! and each line is flushed before the request is acknowledged.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;

use keytone::evaluate::{
    bradley_terry, read_judgments, score_points, Choice, Judgment, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE,
};

use crate::session::SessionSpec;

const MAX_JUDGE_ID_LEN: usize = 64;

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Pair comparison</title></head>\n<body style=\"background:#808080\"><p>The comparison UI is not installed. Start the server with <code>--assets DIR</code>.</p></body></html>\n";

struct JudgmentLog {
    file: File,
    judgments: Vec<Judgment>,
    seen: HashSet<(String, String)>,
}

pub struct AppState {
    session: SessionSpec,
    /// Image token to variant name.
    tokens: HashMap<String, String>,
    assets: Option<PathBuf>,
    log: Mutex<JudgmentLog>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Opens (or creates) the judgment file and picks up the judgments of
    /// this session already in it, so a restarted server resumes.
    pub fn open(session: SessionSpec, judgments: &Path, assets: Option<PathBuf>) -> Result<SharedState> {
        let previous = if judgments.exists() && std::fs::metadata(judgments)?.len() > 0 {
            read_judgments(judgments).with_context(|| format!("reading {}", judgments.display()))?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(judgments)
            .with_context(|| format!("opening {}", judgments.display()))?;
        let mine: Vec<Judgment> = previous
            .into_iter()
            .filter(|j| j.session_id == session.session_id)
            .collect();
        let seen = mine.iter().map(|j| (j.judge_id.clone(), j.pair_id.clone())).collect();
        let tokens = session.variants.keys().map(|v| (session.token(v), v.clone())).collect();
        Ok(Arc::new(Self {
            session,
            tokens,
            assets,
            log: Mutex::new(JudgmentLog {
                file,
                judgments: mine,
                seen,
            }),
        }))
    }

    fn image_url(&self, variant: &str) -> String {
        format!("/img/{}", self.session.token(variant))
    }
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/pair/next", get(next_pair))
        .route("/api/judgment", post(post_judgment))
        .route("/api/results", get(get_results))
        .route("/img/{token}", get(get_image))
        .fallback(get(static_asset))
        .with_state(state)
}

pub async fn serve(state: SharedState, host: &str, port: u16) -> Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .with_context(|| format!("binding {host}:{port}"))?;
    eprintln!(
        "serving session `{}` on http://{}",
        state.session.session_id,
        listener.local_addr()?
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Debug, Deserialize)]
pub struct JudgeQuery {
    judge: Option<String>,
}

fn judge_id(q: &JudgeQuery) -> Option<&str> {
    q.judge
        .as_deref()
        .map(str::trim)
        .filter(|j| !j.is_empty() && j.len() <= MAX_JUDGE_ID_LEN)
}

async fn get_session(State(state): State<SharedState>, Query(q): Query<JudgeQuery>) -> Response {
    let log = state.log.lock().await;
    let judges: HashSet<&str> = log.judgments.iter().map(|j| j.judge_id.as_str()).collect();
    let total = state.session.pairs.len();
    let finished = judges
        .iter()
        .filter(|&&j| log.judgments.iter().filter(|x| x.judge_id == j).count() >= total)
        .count();
    let mut body = json!({
        "session_id": state.session.session_id,
        "pairs": total,
        "judges_expected": state.session.judges_expected,
        "progress": {
            "judgments": log.judgments.len(),
            "judges": judges.len(),
            "judges_finished": finished,
        },
    });
    if let Some(judge) = judge_id(&q) {
        let done = state
            .session
            .pairs
            .iter()
            .filter(|p| log.seen.contains(&(judge.to_string(), p.pair_id.clone())))
            .count();
        body["judge"] = json!({ "judge_id": judge, "done": done, "remaining": total - done });
    }
    Json(body).into_response()
}

async fn next_pair(State(state): State<SharedState>, Query(q): Query<JudgeQuery>) -> Response {
    let Some(judge) = judge_id(&q) else {
        return error(
            StatusCode::BAD_REQUEST,
            "query parameter `judge` must be 1-64 characters",
        );
    };
    let log = state.log.lock().await;
    let total = state.session.pairs.len();
    let pending = state
        .session
        .pairs
        .iter()
        .enumerate()
        .find(|(_, p)| !log.seen.contains(&(judge.to_string(), p.pair_id.clone())));
    match pending {
        None => Json(json!({ "done": true, "total": total })).into_response(),
        Some((i, p)) => Json(json!({
            "done": false,
            "session_id": state.session.session_id,
            "pair_id": p.pair_id,
            "index": i + 1,
            "total": total,
            "left": state.image_url(&p.left),
            "right": state.image_url(&p.right),
        }))
        .into_response(),
    }
}

/// Body of `POST /api/judgment`. Sides are known to the server, so the
/// client only names the pair and the chosen side.
#[derive(Debug, Deserialize)]
pub struct JudgmentRequest {
    pub session_id: String,
    pub judge_id: String,
    pub pair_id: String,
    pub choice: Choice,
    pub timestamp: Option<String>,
}

#[derive(Debug, Serialize)]
struct Recorded {
    pair_id: String,
    remaining: usize,
}

async fn post_judgment(State(state): State<SharedState>, body: Bytes) -> Response {
    let req: JudgmentRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed judgment: {e}")),
    };
    if req.session_id != state.session.session_id {
        return error(StatusCode::BAD_REQUEST, format!("unknown session `{}`", req.session_id));
    }
    let judge = req.judge_id.trim().to_string();
    if judge.is_empty() || judge.len() > MAX_JUDGE_ID_LEN {
        return error(StatusCode::BAD_REQUEST, "judge_id must be 1-64 characters");
    }
    let Some(pair) = state.session.pair(&req.pair_id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown pair `{}`", req.pair_id));
    };
    let judgment = Judgment {
        session_id: req.session_id,
        judge_id: judge.clone(),
        pair_id: pair.pair_id.clone(),
        left: pair.left.clone(),
        right: pair.right.clone(),
        choice: req.choice,
        timestamp: req
            .timestamp
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    if let Err(e) = judgment.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    let line = match judgment.to_json_line() {
        Ok(l) => l,
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    };
    let mut log = state.log.lock().await;
    let key = (judge.clone(), pair.pair_id.clone());
    if log.seen.contains(&key) {
        return error(
            StatusCode::CONFLICT,
            format!("judge `{judge}` already judged pair `{}`", pair.pair_id),
        );
    }
    if let Err(e) = log.file.write_all(line.as_bytes()).and_then(|()| log.file.flush()) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("appending judgment: {e}"));
    }
    log.seen.insert(key);
    log.judgments.push(judgment);
    let remaining = state
        .session
        .pairs
        .iter()
        .filter(|p| !log.seen.contains(&(judge.clone(), p.pair_id.clone())))
        .count();
    (
        StatusCode::CREATED,
        Json(Recorded {
            pair_id: pair.pair_id.clone(),
            remaining,
        }),
    )
        .into_response()
}

async fn get_results(State(state): State<SharedState>) -> Response {
    let log = state.log.lock().await;
    if log.judgments.is_empty() {
        return Json(json!({ "points": BTreeMap::<String, u64>::new(), "n_judgments": 0 })).into_response();
    }
    let result = match bradley_terry(&log.judgments, DEFAULT_BT_MAX_ITER, DEFAULT_BT_TOLERANCE) {
        Ok(r) => r,
        Err(e) => match score_points(&log.judgments) {
            Ok(mut r) => {
                r.warning = Some(e.to_string());
                r
            }
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        },
    };
    Json(result).into_response()
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("ppm") => "image/x-portable-pixmap",
        Some("pgm") => "image/x-portable-graymap",
        Some("pam") => "image/x-portable-arbitrarymap",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("html" | "htm") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn send_file(path: &Path) -> Response {
    match tokio::fs::read(path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(path))], bytes).into_response(),
        Err(_) => error(StatusCode::NOT_FOUND, "not found"),
    }
}

async fn get_image(State(state): State<SharedState>, UrlPath(token): UrlPath<String>) -> Response {
    match state.tokens.get(&token) {
        Some(variant) => send_file(&state.session.variants[variant]).await,
        None => error(StatusCode::NOT_FOUND, "unknown image"),
    }
}

async fn static_asset(State(state): State<SharedState>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let Some(root) = &state.assets else {
        return if rel.is_empty() || rel == "index.html" {
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], PLACEHOLDER_PAGE).into_response()
        } else {
            error(StatusCode::NOT_FOUND, "not found")
        };
    };
    let rel = Path::new(if rel.is_empty() { "index.html" } else { rel });
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return error(StatusCode::NOT_FOUND, "not found");
    }
    send_file(&root.join(rel)).await
}
