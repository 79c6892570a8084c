use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, FinishReason};

/// Unprocessed completion as returned by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub content: String,
    /// Reasoning returned out of band by the endpoint, if any.
    pub reasoning: Option<String>,
    pub finish_reason: FinishReason,
}

impl RawCompletion {
    pub fn stop(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            reasoning: None,
            finish_reason: FinishReason::Stop,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: connection failures, timeouts, 429 and 5xx.
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("no mock fixture {path} for request {key}")]
    MissingFixture { key: String, path: PathBuf },
    #[error("{0}")]
    Other(String),
}

pub trait Backend: Send + Sync {
    fn generate(&self, request: &ChatRequest) -> Result<RawCompletion, BackendError>;
}

/// First line of a fixture file that marks the response as truncated.
pub const TRUNCATED_DIRECTIVE: &str = "%finish_reason=length";

/// Replays canned responses from `<dir>/<request-key>.txt`.
///
/// A fixture whose first line is [`TRUNCATED_DIRECTIVE`] is served with
/// finish reason `length`; the directive line is not part of the content.
#[derive(Debug, Clone)]
pub struct MockBackend {
    source: MockSource,
}

#[derive(Debug, Clone)]
enum MockSource {
    Dir(PathBuf),
    Map(HashMap<String, String>),
}

impl MockBackend {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            source: MockSource::Dir(dir.into()),
        }
    }

    /// In-memory fixtures keyed by [`ChatRequest::key`].
    pub fn from_map(fixtures: HashMap<String, String>) -> Self {
        Self {
            source: MockSource::Map(fixtures),
        }
    }

    pub fn fixture_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(format!("{key}.txt"))
    }
}

impl Backend for MockBackend {
    fn generate(&self, request: &ChatRequest) -> Result<RawCompletion, BackendError> {
        let key = request.key();
        let raw = match &self.source {
            MockSource::Dir(dir) => {
                let path = Self::fixture_path(dir, &key);
                match std::fs::read_to_string(&path) {
                    Ok(s) => s,
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                        return Err(BackendError::MissingFixture { key, path })
                    }
                    Err(e) => return Err(BackendError::Other(format!("{}: {e}", path.display()))),
                }
            }
            MockSource::Map(map) => match map.get(&key) {
                Some(s) => s.clone(),
                None => {
                    return Err(BackendError::MissingFixture {
                        path: PathBuf::from(format!("{key}.txt")),
                        key,
                    })
                }
            },
        };
        Ok(decode_fixture(&raw))
    }
}

fn decode_fixture(raw: &str) -> RawCompletion {
    match raw.split_once('\n') {
        Some((first, rest)) if first.trim_end() == TRUNCATED_DIRECTIVE => RawCompletion {
            content: rest.to_string(),
            reasoning: None,
            finish_reason: FinishReason::Length,
        },
        _ if raw.trim_end() == TRUNCATED_DIRECTIVE => RawCompletion {
            content: String::new(),
            reasoning: None,
            finish_reason: FinishReason::Length,
        },
        _ => RawCompletion::stop(raw),
    }
}

/// Connection settings for a chat-completions-compatible endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointProfile {
    /// Full URL of the chat completions route.
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub think: super::ThinkDelimiters,
}

fn default_timeout_secs() -> u64 {
    600
}

/// Blocking client for `POST /v1/chat/completions`-style endpoints.
pub struct HttpBackend {
    profile: EndpointProfile,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(profile: EndpointProfile) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(profile.timeout_secs))
            .build()
            .map_err(|e| BackendError::Other(format!("http client: {e}")))?;
        let token = profile
            .auth_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        Ok(Self {
            profile,
            client,
            token,
        })
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let s = &request.sampling;
        json!({
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": s.temperature,
            "top_p": s.top_p,
            "top_k": s.top_k,
            "min_p": s.min_p,
            "max_tokens": s.max_tokens,
            "chat_template_kwargs": {"enable_thinking": request.thinking_enabled},
        })
    }
}

impl Backend for HttpBackend {
    fn generate(&self, request: &ChatRequest) -> Result<RawCompletion, BackendError> {
        let mut builder = self
            .client
            .post(&self.profile.url)
            .json(&self.body(request));
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transient(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Endpoint {
                status: status.as_u16(),
                body: text,
            });
        }
        decode_chat_response(&text)
    }
}

/// Reads `choices[0]` of a chat completions response body.
pub fn decode_chat_response(body: &str) -> Result<RawCompletion, BackendError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| BackendError::Other(format!("malformed response body: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Other("response has no choices".into()))?;
    let message = choice.get("message");
    let content = message
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let reasoning = message
        .and_then(|m| m.get("reasoning_content").or_else(|| m.get("reasoning")))
        .and_then(Value::as_str)
        .map(str::to_string);
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Stop,
    };
    Ok(RawCompletion {
        content,
        reasoning,
        finish_reason,
    })
}
