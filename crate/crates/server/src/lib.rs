//! HTTP/JSON service: versioned human-session storage plus the pipeline
//! operations (signals, consensus, backtest, metrics, reflect, report).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use concord_core::api::{self, ErrorBody, PutResponse, VersionsResponse, VERSION_HEADER};
use concord_core::session::{SessionError, SessionKey, SessionKind, SessionStore};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::trace::TraceLayer;

/// Largest accepted request body; backtest requests carry whole price files.
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        Self {
            store: Arc::new(store),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                message: message.into(),
                path: None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<concord_core::Error> for ApiError {
    fn from(e: concord_core::Error) -> Self {
        let status = match &e {
            concord_core::Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            e if e.is_input_error() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_GATEWAY,
        };
        let mut err = ApiError::new(status, e.kind(), e.to_string());
        if let concord_core::Error::Config { field, .. } = &e {
            err.body.path = Some(field.clone());
        }
        err
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Invalid { path, .. } => Self {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    error: "invalid".into(),
                    message,
                    path: Some(path),
                },
            },
            SessionError::BadKey(_) => ApiError::new(StatusCode::BAD_REQUEST, "bad_key", message),
            SessionError::NotFound => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            SessionError::Locked { .. } => ApiError::new(StatusCode::CONFLICT, "locked", message),
            SessionError::Storage(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message),
        }
    }
}

/// JSON extractor whose rejections use the service error body, with the
/// failing field path when the body does not match the schema.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let is_json = req
            .headers()
            .get(header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.starts_with("application/json"));
        if !is_json {
            return Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "unsupported_media_type",
                "expected content-type application/json",
            ));
        }
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(e.status(), "body", e.body_text()))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de).map(ApiJson).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let status = if inner.is_syntax() || inner.is_eof() {
                StatusCode::BAD_REQUEST
            } else {
                StatusCode::UNPROCESSABLE_ENTITY
            };
            let mut err = ApiError::new(status, "invalid", inner.to_string());
            err.body.path = Some(path);
            err
        })
    }
}

pub fn router(state: AppState, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::PUT, Method::POST, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([header::HeaderName::from_static(VERSION_HEADER)]);
    Router::new()
        .route("/health", get(health))
        .route("/sessions/{user}/{ticker}/{kind}", get(get_session).put(put_session))
        .route("/sessions/{user}/{ticker}/{kind}/versions", get(list_versions))
        .route("/signals", post(signals))
        .route("/consensus", post(consensus))
        .route("/backtest", post(backtest))
        .route("/metrics", post(metrics))
        .route("/reflect", post(reflect))
        .route("/report", post(report))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors)
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState, cors_origin: Option<&str>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, cors_origin)).await
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn session_key(user: &str, ticker: &str, kind: &str) -> Result<SessionKey, ApiError> {
    let kind: SessionKind = kind.parse()?;
    Ok(SessionKey::new(user, ticker, kind)?)
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u32>,
}

async fn get_session(
    State(state): State<AppState>,
    Path((user, ticker, kind)): Path<(String, String, String)>,
    Query(q): Query<VersionQuery>,
) -> Result<Response, ApiError> {
    let key = session_key(&user, &ticker, &kind)?;
    let (version, body) = state.store.get(&key, q.version).await?;
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (
                header::HeaderName::from_static(VERSION_HEADER),
                HeaderValue::from(version),
            ),
        ],
        body,
    )
        .into_response())
}

async fn put_session(
    State(state): State<AppState>,
    Path((user, ticker, kind)): Path<(String, String, String)>,
    body: Bytes,
) -> Result<(StatusCode, Json<PutResponse>), ApiError> {
    let key = session_key(&user, &ticker, &kind)?;
    let version = state.store.put(&key, &body).await?;
    Ok((
        StatusCode::CREATED,
        Json(PutResponse {
            key: key.path(),
            version,
        }),
    ))
}

async fn list_versions(
    State(state): State<AppState>,
    Path((user, ticker, kind)): Path<(String, String, String)>,
) -> Result<Json<VersionsResponse>, ApiError> {
    let key = session_key(&user, &ticker, &kind)?;
    let versions = state.store.versions(&key)?;
    if versions.is_empty() {
        return Err(SessionError::NotFound.into());
    }
    Ok(Json(VersionsResponse {
        key: key.path(),
        versions,
    }))
}

async fn signals(ApiJson(req): ApiJson<api::SignalsRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::signals(&req)?).into_response())
}

async fn consensus(ApiJson(req): ApiJson<api::ConsensusRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::consensus(&req)?).into_response())
}

async fn backtest(ApiJson(req): ApiJson<api::BacktestRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::backtest(&req).await?).into_response())
}

async fn metrics(ApiJson(req): ApiJson<api::MetricsRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::metrics(&req)?).into_response())
}

async fn reflect(ApiJson(req): ApiJson<api::ReflectRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::reflect_snapshot(&req).await?).into_response())
}

async fn report(ApiJson(req): ApiJson<api::ReportRequest>) -> Result<Response, ApiError> {
    Ok(Json(api::report(&req)?).into_response())
}
