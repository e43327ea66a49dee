use chrono::NaiveDate;
use concord_client::{Client, ClientError};
use concord_core::api::{self, BacktestRequest, MetricsRequest, SignalsRequest};
use concord_core::backtest::BacktestConfig;
use concord_core::market_data::write_price_csv;
use concord_core::session::{PortfolioState, SessionKey, SessionKind, SessionStore, SCHEMA_VERSION};
use concord_core::synthetic::{synthetic_items, synthetic_series, GbmParams, ItemParams};
use concord_server::{router, AppState};

async fn spawn(store: SessionStore) -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(AppState::new(store), None)).await.unwrap();
    });
    Client::new(&format!("http://{addr}/"))
}

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn portfolio(user: &str, day: u32, cash: f64) -> Vec<u8> {
    serde_json::to_vec(&PortfolioState {
        schema_version: SCHEMA_VERSION,
        user_id: user.into(),
        ticker: "NVDA".into(),
        day,
        cash,
        shares: 3,
        last_price: 481.25,
    })
    .unwrap()
}

#[tokio::test]
async fn sessions_round_trip_through_the_service() {
    let dir = tempfile::tempdir().unwrap();
    let client = spawn(SessionStore::on_disk(dir.path())).await;
    client.health().await.unwrap();
    let key = SessionKey::new("carol", "NVDA", SessionKind::PortfolioState).unwrap();

    assert!(matches!(client.get_session(&key, None).await, Err(ClientError::NotFound)));
    assert!(matches!(client.session_versions(&key).await, Err(ClientError::NotFound)));

    let first = portfolio("carol", 1, 9_000.0);
    let second = portfolio("carol", 2, 8_123.5);
    assert_eq!(client.put_session(&key, first.clone()).await.unwrap(), 1);
    assert_eq!(client.put_session(&key, second.clone()).await.unwrap(), 2);
    assert_eq!(client.get_session(&key, None).await.unwrap(), (2, second));
    assert_eq!(client.get_session(&key, Some(1)).await.unwrap(), (1, first));
    assert_eq!(client.session_versions(&key).await.unwrap(), [1, 2]);
    assert!(matches!(client.get_session(&key, Some(9)).await, Err(ClientError::NotFound)));
}

#[tokio::test]
async fn service_errors_carry_status_and_path() {
    let client = spawn(SessionStore::in_memory()).await;
    let key = SessionKey::new("carol", "NVDA", SessionKind::PortfolioState).unwrap();
    match client.put_session(&key, portfolio("dave", 1, 1.0)).await {
        Err(ClientError::Api { status, body }) => {
            assert_eq!(status, 422);
            assert_eq!(body.path.as_deref(), Some("user_id"));
        }
        other => panic!("expected an api error, got {other:?}"),
    }

    let err = client
        .metrics(&MetricsRequest {
            values: vec![100.0],
            config: None,
            region: None,
        })
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 422, .. }), "{err}");
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let client = Client::new(&format!("http://{addr}"));
    assert!(matches!(client.health().await, Err(ClientError::Transport(_))));
}

fn prices_csv() -> (String, Vec<concord_core::market_data::InfoItem>) {
    let series = synthetic_series("NVDA", d("2022-11-01"), d("2024-02-09"), &GbmParams::default(), 21).unwrap();
    let items = synthetic_items(&series, d("2024-01-02"), &ItemParams::default(), 21);
    let mut out = Vec::new();
    write_price_csv(&series, &mut out).unwrap();
    (String::from_utf8(out).unwrap(), items)
}

#[tokio::test]
async fn remote_results_match_in_process_results() {
    let client = spawn(SessionStore::in_memory()).await;
    let (csv, items) = prices_csv();

    let signals = SignalsRequest {
        ticker: "NVDA".into(),
        prices_csv: csv.clone(),
        as_of: Some(d("2024-01-31")),
        cash: 100_000.0,
        shares: 0,
        config: None,
    };
    // summaries are fixed-precision on the wire, so compare records
    assert_eq!(
        client.signals(&signals).await.unwrap().to_record(),
        api::signals(&signals).unwrap().to_record()
    );

    for strategy in ["agents", "macd", "buy-and-hold"] {
        let req = BacktestRequest {
            ticker: "NVDA".into(),
            prices_csv: csv.clone(),
            strategy: strategy.into(),
            items: items.clone(),
            config: Some(BacktestConfig {
                start: Some(d("2024-01-02")),
                ..BacktestConfig::default()
            }),
            baselines: None,
            roster: None,
            trader: None,
            consensus: None,
            signals: None,
            max_in_flight: None,
            include_archive: true,
        };
        let remote = client.backtest(&req).await.unwrap();
        let local = api::backtest(&req).await.unwrap();
        assert_eq!(
            serde_json::to_string(&remote).unwrap(),
            serde_json::to_string(&local).unwrap(),
            "{strategy}"
        );
    }
}
