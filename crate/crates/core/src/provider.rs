//! Chat-completion provider abstraction with a deterministic mock.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSchema {
    DomainReport,
    Reflection,
    TradeDecision,
}

impl OutputSchema {
    pub fn id(self) -> &'static str {
        match self {
            OutputSchema::DomainReport => "domain_report.v1",
            OutputSchema::Reflection => "reflection.v1",
            OutputSchema::TradeDecision => "trade_decision.v1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub schema: OutputSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("provider unavailable: {0}")]
    Unavailable(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    fn id(&self) -> &str;
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockBehavior {
    /// Echoes every claim it is shown.
    Faithful,
    /// Drops, flips and jitters claims with the given rates, seeded.
    Noisy {
        drop_rate: f64,
        flip_rate: f64,
        jitter: f64,
    },
    /// Always fails.
    Fail,
    /// Returns text that violates every structured contract.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    Mock {
        seed: u64,
        behavior: MockBehavior,
    },
    /// OpenAI-compatible chat-completions endpoint. The API key is read from
    /// the named environment variable.
    Http {
        base_url: String,
        api_key_env: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub provider_id: String,
    pub endpoint: Endpoint,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_true")]
    pub deterministic: bool,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    1
}

fn default_true() -> bool {
    true
}

impl ProviderSpec {
    pub fn mock(id: &str, seed: u64, behavior: MockBehavior) -> Self {
        Self {
            provider_id: id.into(),
            endpoint: Endpoint::Mock { seed, behavior },
            model: "mock".into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            deterministic: true,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn build(&self) -> Result<Arc<dyn ChatProvider>, ProviderError> {
        Ok(match &self.endpoint {
            Endpoint::Mock { seed, behavior } => Arc::new(MockProvider {
                id: self.provider_id.clone(),
                seed: *seed,
                behavior: behavior.clone(),
            }),
            Endpoint::Http {
                base_url,
                api_key_env,
            } => {
                let api_key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        ProviderError::Unavailable(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                Arc::new(HttpChatProvider {
                    id: self.provider_id.clone(),
                    client: reqwest::Client::new(),
                    base_url: base_url.trim_end_matches('/').to_string(),
                    model: self.model.clone(),
                    api_key,
                    deterministic: self.deterministic,
                })
            }
        })
    }
}

/// Runs `request` with the spec's timeout, retrying up to `max_retries` times.
pub async fn complete_with_retry(
    provider: &dyn ChatProvider,
    spec: &ProviderSpec,
    request: &ChatRequest,
) -> Result<ChatResponse, ProviderError> {
    let mut last = ProviderError::Unavailable("no attempt made".into());
    for attempt in 0..=spec.max_retries {
        match tokio::time::timeout(spec.timeout(), provider.complete(request)).await {
            Ok(Ok(resp)) => return Ok(resp),
            Ok(Err(e)) => last = e,
            Err(_) => last = ProviderError::Timeout(spec.timeout()),
        }
        tracing::debug!(provider = provider.id(), attempt, error = %last, "provider attempt failed");
    }
    Err(last)
}

/// Deterministic stand-in for a chat model.
#[derive(Debug, Clone)]
pub struct MockProvider {
    pub id: String,
    pub seed: u64,
    pub behavior: MockBehavior,
}

fn mix(seed: u64, id: &str, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in id.bytes().chain([0xff]).chain(text.bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub const ITEMS_HEADER: &str = "## Items";

impl MockProvider {
    fn domain_report(&self, request: &ChatRequest) -> String {
        let claim_lines = request
            .user
            .lines()
            .skip_while(|l| l.trim() != ITEMS_HEADER)
            .skip(1)
            .filter(|l| l.matches('|').count() == 5);
        let mut out = vec![format!("Report by {}", self.id)];
        for line in claim_lines {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, &self.id, line));
            let (drop_rate, flip_rate, jitter) = match &self.behavior {
                MockBehavior::Noisy {
                    drop_rate,
                    flip_rate,
                    jitter,
                } => (*drop_rate, *flip_rate, *jitter),
                _ => (0.0, 0.0, 0.0),
            };
            let (u_drop, u_flip, u_jit): (f64, f64, f64) =
                (rng.random(), rng.random(), rng.random());
            if u_drop < drop_rate {
                continue;
            }
            let mut fields: Vec<String> = line.split('|').map(|f| f.trim().to_string()).collect();
            if u_flip < flip_rate {
                fields[3] = match fields[3].as_str() {
                    "+1" | "1" => "-1".into(),
                    "-1" => "+1".into(),
                    other => other.to_string(),
                };
            }
            if jitter > 0.0 && !fields[4].is_empty() {
                let raw = fields[4].trim_start_matches("value=").to_string();
                let mut parts = raw.splitn(2, ' ');
                if let Ok(x) = parts.next().unwrap_or_default().parse::<f64>() {
                    let unit = parts.next().unwrap_or_default();
                    let shifted = x + jitter * (2.0 * u_jit - 1.0);
                    fields[4] = format!("value={shifted:.4} {unit}").trim().to_string();
                }
            }
            out.push(format!("- {}", fields.join(" | ")));
        }
        if out.len() == 1 {
            out.push("No material claims observed.".into());
        }
        out.join("\n")
    }

    fn reflection(&self, request: &ChatRequest) -> String {
        let config = request
            .user
            .lines()
            .find_map(|l| l.strip_prefix("Horizon configuration: "))
            .unwrap_or("unknown");
        if request.user.contains("Realized outcomes: none") {
            return format!(
                "Reflection [{config}]: no realized outcomes yet; keep sizing conservative until outcomes accumulate."
            );
        }
        let mut out = vec![format!("Reflection [{config}]:")];
        for line in request.user.lines().filter(|l| l.starts_with("h=")) {
            out.push(format!("- {line}"));
        }
        out.join("\n")
    }

    fn trade_decision(&self, request: &ChatRequest) -> String {
        let proposal = request
            .user
            .lines()
            .find_map(|l| l.strip_prefix("Temporal-signal-driven proposal: "))
            .unwrap_or("HOLD 0%");
        let mut parts = proposal.split_whitespace();
        let action = parts.next().unwrap_or("HOLD");
        let pct: u8 = parts
            .next()
            .and_then(|p| p.trim_end_matches('%').parse().ok())
            .unwrap_or(0);
        serde_json::json!({
            "action": action,
            "trade_pct": pct,
            "confidence": 50,
            "rationale": format!("{} follows the temporal proposal", self.id),
        })
        .to_string()
    }
}

#[async_trait]
impl ChatProvider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let text = match (&self.behavior, request.schema) {
            (MockBehavior::Fail, _) => {
                return Err(ProviderError::Unavailable(format!("{} is configured to fail", self.id)))
            }
            (MockBehavior::Malformed, _) => "<<garbled output>>".to_string(),
            (_, OutputSchema::DomainReport) => self.domain_report(request),
            (_, OutputSchema::Reflection) => self.reflection(request),
            (_, OutputSchema::TradeDecision) => self.trade_decision(request),
        };
        Ok(ChatResponse { text })
    }
}

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint.
#[derive(Debug, Clone)]
pub struct HttpChatProvider {
    id: String,
    client: reqwest::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
    deterministic: bool,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

#[async_trait]
impl ChatProvider for HttpChatProvider {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "metadata": {"output_schema": request.schema.id()},
        });
        if self.deterministic {
            body["temperature"] = 0.into();
        }
        if request.schema == OutputSchema::TradeDecision {
            body["response_format"] = serde_json::json!({"type": "json_object"});
        }
        let mut req = self
            .client
            .post(format!("{}/v1/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: CompletionBody = resp
            .json()
            .await
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no content in first choice".into()))?;
        Ok(ChatResponse { text })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_request(lines: &[&str]) -> ChatRequest {
        ChatRequest {
            system: String::new(),
            user: format!("Context\n{ITEMS_HEADER}\n{}", lines.join("\n")),
            schema: OutputSchema::DomainReport,
        }
    }

    #[tokio::test]
    async fn faithful_mock_echoes_claims() {
        let p = MockProvider {
            id: "a".into(),
            seed: 1,
            behavior: MockBehavior::Faithful,
        };
        let line = "market | AAPL | up | +1 |  | 2024-01-01";
        let out = p.complete(&report_request(&[line])).await.unwrap();
        assert!(out.text.contains("market | AAPL | up | +1 |  | 2024-01-01"));
    }

    #[tokio::test]
    async fn noisy_mock_is_repeatable() {
        let p = MockProvider {
            id: "b".into(),
            seed: 9,
            behavior: MockBehavior::Noisy {
                drop_rate: 0.3,
                flip_rate: 0.3,
                jitter: 0.5,
            },
        };
        let lines: Vec<String> = (0..20)
            .map(|i| format!("news | X{i} | beat | +1 | value={i} USD | 2024-01-01"))
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let a = p.complete(&report_request(&refs)).await.unwrap();
        let b = p.complete(&report_request(&refs)).await.unwrap();
        assert_eq!(a, b);
    }

    struct Slow;

    #[async_trait]
    impl ChatProvider for Slow {
        fn id(&self) -> &str {
            "slow"
        }
        async fn complete(&self, _: &ChatRequest) -> Result<ChatResponse, ProviderError> {
            tokio::time::sleep(Duration::from_secs(5)).await;
            Ok(ChatResponse { text: String::new() })
        }
    }

    #[tokio::test]
    async fn timeout_is_reported() {
        let mut spec = ProviderSpec::mock("slow", 0, MockBehavior::Faithful);
        spec.timeout_ms = 10;
        spec.max_retries = 1;
        let err = complete_with_retry(&Slow, &spec, &report_request(&[]))
            .await
            .unwrap_err();
        assert!(matches!(err, ProviderError::Timeout(_)));
    }
}
