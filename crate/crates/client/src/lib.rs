//! Thin async client for the concord HTTP service.

use concord_core::api::{
    BacktestRequest, BacktestResponse, ConsensusRequest, ErrorBody, MetricsRequest, MetricsResponse, PutResponse,
    ReflectRequest, ReflectResponse, ReportRequest, ReportResponse, SignalsRequest, VersionsResponse,
    VERSION_HEADER,
};
use concord_core::consensus::ConsensusOutcome;
use concord_core::session::SessionKey;
use concord_core::signals::TemporalSummary;
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The key (or version) has never been stored.
    #[error("not found")]
    NotFound,
    #[error("service returned {status}: {} ({})", .body.message, .body.error)]
    Api { status: u16, body: ErrorBody },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: &str) -> Self {
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        if status == StatusCode::NOT_FOUND {
            return Err(ClientError::NotFound);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: "http".into(),
            message: text,
            path: None,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            body,
        })
    }

    async fn call<Req: Serialize + ?Sized, Resp: DeserializeOwned>(&self, path: &str, req: &Req) -> Result<Resp> {
        let resp = self.http.request(Method::POST, self.url(path)).json(req).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn health(&self) -> Result<()> {
        Self::check(self.http.get(self.url("/health")).send().await?).await?;
        Ok(())
    }

    /// Stores `body` verbatim under `key`; returns the new version.
    pub async fn put_session(&self, key: &SessionKey, body: Vec<u8>) -> Result<u32> {
        let resp = self
            .http
            .put(self.url(&format!("/{}", key.path())))
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await?;
        let put: PutResponse = Self::check(resp).await?.json().await?;
        Ok(put.version)
    }

    /// The stored bytes and their version; latest unless `version` is given.
    pub async fn get_session(&self, key: &SessionKey, version: Option<u32>) -> Result<(u32, Vec<u8>)> {
        let mut url = self.url(&format!("/{}", key.path()));
        if let Some(v) = version {
            url.push_str(&format!("?version={v}"));
        }
        let resp = Self::check(self.http.get(url).send().await?).await?;
        let version = resp
            .headers()
            .get(VERSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ClientError::Protocol(format!("missing {VERSION_HEADER} header")))?;
        Ok((version, resp.bytes().await?.to_vec()))
    }

    pub async fn session_versions(&self, key: &SessionKey) -> Result<Vec<u32>> {
        let resp = self
            .http
            .get(self.url(&format!("/{}/versions", key.path())))
            .send()
            .await?;
        let v: VersionsResponse = Self::check(resp).await?.json().await?;
        Ok(v.versions)
    }

    pub async fn signals(&self, req: &SignalsRequest) -> Result<TemporalSummary> {
        self.call("/signals", req).await
    }

    pub async fn consensus(&self, req: &ConsensusRequest) -> Result<ConsensusOutcome> {
        self.call("/consensus", req).await
    }

    pub async fn backtest(&self, req: &BacktestRequest) -> Result<BacktestResponse> {
        self.call("/backtest", req).await
    }

    pub async fn metrics(&self, req: &MetricsRequest) -> Result<MetricsResponse> {
        self.call("/metrics", req).await
    }

    pub async fn reflect(&self, req: &ReflectRequest) -> Result<ReflectResponse> {
        self.call("/reflect", req).await
    }

    pub async fn report(&self, req: &ReportRequest) -> Result<ReportResponse> {
        self.call("/report", req).await
    }
}
