use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use concord_core::api::{BacktestResponse, ErrorBody, MetricsResponse, PutResponse, ReportResponse, VersionsResponse};
use concord_core::market_data::write_price_csv;
use concord_core::orchestration::StageId;
use concord_core::session::{
    DayRecord, Demographics, FinalExtras, HumanSession, PortfolioState, SessionStore, StageEntry, SCHEMA_VERSION,
};
use concord_core::signals::Action;
use concord_core::synthetic::{synthetic_series, GbmParams};
use concord_server::{router, AppState};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::new(SessionStore::in_memory()), None)
}

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, body)
}

fn json_req(method: &str, uri: &str, body: &Value) -> Request<Body> {
    Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::builder().uri(uri).body(Body::empty()).unwrap()
}

fn stage(stage: StageId, action: Action) -> StageEntry {
    let flagged = matches!(stage, StageId::D1 | StageId::D2 | StageId::D3 | StageId::D4);
    StageEntry {
        stage,
        action,
        reliability: 60,
        rationale: "chart looks strong".into(),
        leakage_flag: flagged.then_some(false),
        time_on_stage_ms: Some(12_000),
    }
}

fn session(user: &str, finished: u32, first_action: Action) -> HumanSession {
    let days = (1..=finished)
        .map(|day| DayRecord {
            day,
            date: None,
            stages: StageId::ALL
                .iter()
                .map(|&s| stage(s, if day == 1 { first_action } else { Action::Hold }))
                .collect(),
            final_extras: Some(FinalExtras {
                most_influential: "news".into(),
                most_reliable: "temporal".into(),
                trade_size: 50,
            }),
        })
        .collect();
    HumanSession {
        schema_version: SCHEMA_VERSION,
        user_id: user.into(),
        demographics: Demographics {
            education: "master".into(),
            finance_experience: "some".into(),
        },
        ticker: "NVDA".into(),
        current_day: finished + 1,
        days,
        portfolio: PortfolioState {
            schema_version: SCHEMA_VERSION,
            user_id: user.into(),
            ticker: "NVDA".into(),
            day: finished,
            cash: 10_000.0,
            shares: 0,
            last_price: 120.5,
        },
    }
}

fn put(uri: &str, body: Vec<u8>) -> Request<Body> {
    Request::builder()
        .method("PUT")
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body))
        .unwrap()
}

fn prices_csv() -> String {
    let series = synthetic_series("NVDA", d("2022-11-01"), d("2024-01-31"), &GbmParams::default(), 11).unwrap();
    let mut out = Vec::new();
    write_price_csv(&series, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

const EXPORT: &str = "/sessions/alice/NVDA/session-export";

#[tokio::test]
async fn health_is_ok() {
    let (status, _, body) = send(&app(), get("/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&body).unwrap()["status"], "ok");
}

#[tokio::test]
async fn session_versions_are_kept() {
    let app = app();
    let first = serde_json::to_vec_pretty(&session("alice", 1, Action::Buy)).unwrap();
    let second = serde_json::to_vec_pretty(&session("alice", 2, Action::Buy)).unwrap();

    let (status, _, body) = send(&app, put(EXPORT, first.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    let created: PutResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!((created.key.as_str(), created.version), ("sessions/alice/NVDA/session-export", 1));
    let (status, _, _) = send(&app, put(EXPORT, second.clone())).await;
    assert_eq!(status, StatusCode::CREATED);

    let (status, headers, body) = send(&app, get(EXPORT)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["x-session-version"], "2");
    assert_eq!(body, second);

    let (_, headers, body) = send(&app, get(&format!("{EXPORT}?version=1"))).await;
    assert_eq!(headers["x-session-version"], "1");
    assert_eq!(body, first);

    let (_, _, body) = send(&app, get(&format!("{EXPORT}/versions"))).await;
    let versions: VersionsResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(versions.versions, [1, 2]);
}

#[tokio::test]
async fn missing_session_is_404() {
    let app = app();
    let (status, _, body) = send(&app, get("/sessions/nobody/NVDA/portfolio-state")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().error, "not_found");
    let (status, _, _) = send(&app, get("/sessions/nobody/NVDA/portfolio-state/versions")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn finalized_days_are_locked() {
    let app = app();
    send(&app, put(EXPORT, serde_json::to_vec(&session("alice", 1, Action::Buy)).unwrap())).await;
    let rewritten = serde_json::to_vec(&session("alice", 1, Action::Sell)).unwrap();
    let (status, _, body) = send(&app, put(EXPORT, rewritten)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().error, "locked");
}

#[tokio::test]
async fn invalid_session_reports_path() {
    let mut s = session("alice", 1, Action::Buy);
    s.days[0].stages.remove(1);
    let (status, _, body) = send(&app(), put(EXPORT, serde_json::to_vec(&s).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert!(err.path.unwrap().starts_with("days[0]"));

    let other_user = serde_json::to_vec(&session("bob", 1, Action::Buy)).unwrap();
    let (status, _, _) = send(&app(), put(EXPORT, other_user)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn bad_keys_are_400() {
    let app = app();
    let (status, _, _) = send(&app, get("/sessions/alice/NVDA/diary")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = send(&app, get("/sessions/al%20ice/NVDA/session-export")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn operations_require_json() {
    let req = Request::builder()
        .method("POST")
        .uri("/metrics")
        .header(header::CONTENT_TYPE, "text/plain")
        .body(Body::from("values=1,2"))
        .unwrap();
    let (status, _, _) = send(&app(), req).await;
    assert_eq!(status, StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let req = Request::builder()
        .method("POST")
        .uri("/metrics")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{\"values\": [1,"))
        .unwrap();
    let (status, _, _) = send(&app(), req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn schema_errors_name_the_field() {
    let (status, _, body) = send(&app(), json_req("POST", "/metrics", &json!({ "values": [100.0, "x"] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(err.path.as_deref(), Some("values[1]"));
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let req = Request::builder()
        .uri("/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (_, headers, _) = send(&app(), req).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");

    let pinned = router(AppState::new(SessionStore::in_memory()), Some("http://localhost:5173"));
    let req = Request::builder()
        .uri("/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let (_, headers, _) = send(&pinned, req).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}

#[tokio::test]
async fn metrics_operation() {
    let body = json!({
        "values": [100.0, 110.0, 99.0, 121.0],
        "region": { "mu_mdd": 10.0, "mu_cr": 21.0, "sigma_mdd": 1.0, "sigma_cr": 1.0 }
    });
    let (status, _, body) = send(&app(), json_req("POST", "/metrics", &body)).await;
    assert_eq!(status, StatusCode::OK);
    let resp: MetricsResponse = serde_json::from_slice(&body).unwrap();
    assert!((resp.digest.cr - 21.0).abs() < 1e-9);
    assert!((resp.digest.mdd - 10.0).abs() < 1e-9);
    assert!(resp.placement.unwrap().distance < 1e-18);
}

#[tokio::test]
async fn signals_operation() {
    let body = json!({ "ticker": "NVDA", "prices_csv": prices_csv(), "as_of": "2024-01-30" });
    let (status, _, body) = send(&app(), json_req("POST", "/signals", &body)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let summary: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(summary["as_of"], "2024-01-30");
    assert!(summary["proposal"]["action"].is_string());
}

#[tokio::test]
async fn consensus_operation() {
    let line = "news | NVDA | product-launch | +1 | | 2024-01-02T08:00:00Z";
    let body = json!({
        "cutoff": "2024-01-02T13:00:00Z",
        "reports": [
            { "source": "a", "domain": "news", "body": line },
            { "source": "b", "domain": "news", "body": line },
        ]
    });
    let (status, _, body) = send(&app(), json_req("POST", "/consensus", &body)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let outcome: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(outcome["summary"]["high_confidence"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn backtest_reflect_and_report_chain() {
    let app = app();
    let body = json!({
        "ticker": "NVDA",
        "prices_csv": prices_csv(),
        "strategy": "sma",
        "config": { "start": "2024-01-02", "end": "2024-01-31" }
    });
    let (status, _, body) = send(&app, json_req("POST", "/backtest", &body)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let bt: BacktestResponse = serde_json::from_slice(&body).unwrap();
    assert!(!bt.result.values.is_empty());
    assert!(bt.archive.is_none());

    let reflect = json!({
        "snapshot": bt.memory_snapshot,
        "config": { "name": "short", "horizons": [1, 7, 14], "window": 5, "role": "trader" },
        "date": "2024-01-31"
    });
    let (status, _, body) = send(&app, json_req("POST", "/reflect", &reflect)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let reflected: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(reflected["reflection"]["config"], "short");

    let report = json!({ "results": [bt.result] });
    let (status, _, body) = send(&app, json_req("POST", "/report", &report)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let rows: ReportResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(rows.rows.len(), 1);
    assert!(rows.risk_return_csv.starts_with("ticker,strategy,"));
}

#[tokio::test]
async fn backtest_rejects_server_side_paths() {
    let body = json!({
        "ticker": "NVDA",
        "prices_csv": prices_csv(),
        "strategy": "sma",
        "config": { "snapshot": "/tmp/bank.jsonl" }
    });
    let (status, _, body) = send(&app(), json_req("POST", "/backtest", &body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert!(err.message.contains("snapshot"), "{}", err.message);
}

#[tokio::test]
async fn unknown_strategy_is_rejected() {
    let body = json!({ "ticker": "NVDA", "prices_csv": prices_csv(), "strategy": "astrology" });
    let (status, _, _) = send(&app(), json_req("POST", "/backtest", &body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}
