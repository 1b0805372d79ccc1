use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use keytone::evaluate::{read_judgments, score_points};
use keytone_cli::server::{router, AppState};
use keytone_cli::session::SessionSpec;

struct Fixture {
    _dir: tempfile::TempDir,
    log: PathBuf,
    session: SessionSpec,
    app: Router,
}

fn variants(dir: &Path, names: &[&str]) -> BTreeMap<String, PathBuf> {
    names
        .iter()
        .map(|n| {
            let p = dir.join(format!("{n}.ppm"));
            std::fs::write(&p, format!("P6\n1 1\n255\n{n}")).unwrap();
            (n.to_string(), p)
        })
        .collect()
}

fn fixture(names: &[&str]) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let session = SessionSpec::new("study", 1983, 2, variants(dir.path(), names), None).unwrap();
    let log = dir.path().join("judgments.jsonl");
    let app = router(AppState::open(session.clone(), &log, None).unwrap());
    Fixture {
        _dir: dir,
        log,
        session,
        app,
    }
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, body) = send(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

async fn post(app: &Router, body: impl Into<String>) -> StatusCode {
    let req = Request::post("/api/judgment")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.into()))
        .unwrap();
    send(app, req).await.0
}

fn vote(judge: &str, pair: &str, choice: &str) -> String {
    json!({ "session_id": "study", "judge_id": judge, "pair_id": pair, "choice": choice }).to_string()
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[tokio::test]
async fn valid_judgment_is_appended() {
    let f = fixture(&["A", "B"]);
    assert_eq!(post(&f.app, vote("j1", "P01", "Left")).await, StatusCode::CREATED);
    assert_eq!(lines(&f.log), 1);
    let j = &read_judgments(&f.log).unwrap()[0];
    assert_eq!(
        (j.left.as_str(), j.right.as_str()),
        (f.session.pairs[0].left.as_str(), f.session.pairs[0].right.as_str())
    );
}

#[tokio::test]
async fn duplicate_is_rejected() {
    let f = fixture(&["A", "B"]);
    assert_eq!(post(&f.app, vote("j1", "P01", "Left")).await, StatusCode::CREATED);
    assert_eq!(post(&f.app, vote("j1", "P01", "Right")).await, StatusCode::CONFLICT);
    assert_eq!(lines(&f.log), 1);
    assert_eq!(post(&f.app, vote("j2", "P01", "Right")).await, StatusCode::CREATED);
}

#[tokio::test]
async fn bad_requests() {
    let f = fixture(&["A", "B"]);
    assert_eq!(post(&f.app, "{not json").await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&f.app, vote("j1", "P01", "Middle")).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&f.app, vote("", "P01", "Left")).await, StatusCode::BAD_REQUEST);
    let other = json!({ "session_id": "other", "judge_id": "j", "pair_id": "P01", "choice": "Left" });
    assert_eq!(post(&f.app, other.to_string()).await, StatusCode::BAD_REQUEST);
    let stamp =
        json!({ "session_id": "study", "judge_id": "j", "pair_id": "P01", "choice": "Left", "timestamp": "soon" });
    assert_eq!(post(&f.app, stamp.to_string()).await, StatusCode::BAD_REQUEST);
    assert_eq!(post(&f.app, vote("j1", "P99", "Left")).await, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/api/pair/next").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(lines(&f.log), 0);
}

#[tokio::test]
async fn results_match_point_scoring() {
    let f = fixture(&["A", "B"]);
    let pair = &f.session.pairs[0];
    // choose the side showing A three times, B once
    let side_of = |v: &str| if pair.left == v { "Left" } else { "Right" };
    for judge in ["j1", "j2", "j3"] {
        assert_eq!(
            post(&f.app, vote(judge, "P01", side_of("A"))).await,
            StatusCode::CREATED
        );
    }
    assert_eq!(post(&f.app, vote("j4", "P01", side_of("B"))).await, StatusCode::CREATED);
    let (status, v) = get(&f.app, "/api/results").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["points"], json!({ "A": 3, "B": 1 }));
    let oracle = score_points(&read_judgments(&f.log).unwrap()).unwrap();
    assert_eq!(v["points"], serde_json::to_value(&oracle.points).unwrap());
    let ratio = v["strengths"]["A"].as_f64().unwrap() / v["strengths"]["B"].as_f64().unwrap();
    assert!((ratio - 3.0).abs() < 1e-6);
}

#[tokio::test]
async fn results_before_any_judgment() {
    let f = fixture(&["A", "B"]);
    let (status, v) = get(&f.app, "/api/results").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["n_judgments"], 0);
}

#[tokio::test]
async fn degenerate_results_warn() {
    let f = fixture(&["A", "B"]);
    post(&f.app, vote("j1", "P01", "Left")).await;
    let (_, v) = get(&f.app, "/api/results").await;
    assert!(v["strengths"].is_null());
    assert!(v["warning"].as_str().unwrap().contains("degenerate"));
}

#[tokio::test]
async fn judge_walks_through_all_pairs_blind() {
    let f = fixture(&["standard", "adapted", "remap"]);
    let mut seen = Vec::new();
    loop {
        let (status, v) = get(&f.app, "/api/pair/next?judge=ann").await;
        assert_eq!(status, StatusCode::OK);
        if v["done"] == true {
            break;
        }
        let text = v.to_string();
        for name in ["standard", "adapted", "remap"] {
            assert!(!text.contains(name), "variant name leaked: {text}");
        }
        let pair = v["pair_id"].as_str().unwrap().to_string();
        assert!(!seen.contains(&pair));
        // a double click posts twice; only the first counts
        assert_eq!(post(&f.app, vote("ann", &pair, "Left")).await, StatusCode::CREATED);
        assert_eq!(post(&f.app, vote("ann", &pair, "Left")).await, StatusCode::CONFLICT);
        seen.push(pair);
    }
    assert_eq!(seen.len(), 3);
    assert_eq!(lines(&f.log), 3);
    let (_, s) = get(&f.app, "/api/session?judge=ann").await;
    assert_eq!(s["progress"]["judgments"], 3);
    assert_eq!(s["progress"]["judges_finished"], 1);
    assert_eq!(s["judge"]["remaining"], 0);
    assert_eq!(s["pairs"], 3);
}

#[tokio::test]
async fn images_are_served_by_token() {
    let f = fixture(&["A", "B"]);
    let (_, v) = get(&f.app, "/api/pair/next?judge=x").await;
    let url = v["left"].as_str().unwrap().to_string();
    let res = f
        .app
        .clone()
        .oneshot(Request::get(&url).body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()[header::CONTENT_TYPE], "image/x-portable-pixmap");
    let body = res.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(
        &body[..],
        format!("P6\n1 1\n255\n{}", f.session.pairs[0].left).as_bytes()
    );
    assert_eq!(get(&f.app, "/img/A").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn restart_resumes_from_the_log() {
    let f = fixture(&["A", "B"]);
    post(&f.app, vote("j1", "P01", "Left")).await;
    let again = router(AppState::open(f.session.clone(), &f.log, None).unwrap());
    assert_eq!(post(&again, vote("j1", "P01", "Left")).await, StatusCode::CONFLICT);
    assert_eq!(get(&again, "/api/pair/next?judge=j1").await.1["done"], true);
}

#[tokio::test]
async fn static_assets() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("ui");
    std::fs::create_dir(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<html>judge</html>").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "no").unwrap();
    let session = SessionSpec::new("study", 1, 1, variants(dir.path(), &["A", "B"]), None).unwrap();
    let app = router(AppState::open(session.clone(), &dir.path().join("j.jsonl"), Some(assets)).unwrap());
    let (status, body) = send(&app, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>judge</html>");
    let (status, _) = send(&app, Request::get("/../secret.txt").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let bare = router(AppState::open(session, &dir.path().join("k.jsonl"), None).unwrap());
    let (status, body) = send(&bare, Request::get("/").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("not installed"));
}
