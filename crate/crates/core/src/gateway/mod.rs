//! Prompt rendering, chat-completions calls and answer parsing.

mod backend;
mod parse;
mod templates;

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use backend::{
    decode_chat_response, Backend, BackendError, EndpointProfile, HttpBackend, MockBackend,
    RawCompletion, TRUNCATED_DIRECTIVE,
};
pub use parse::{parse_triplet_array, serialize_triplet_array, ParseError, ParsedTriplets};
pub use templates::{render_prompt, render_prompt_lenient, PromptError, TemplateId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub min_p: f64,
    pub max_tokens: u32,
}

/// Output budget for non-thinking generation.
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
/// Output budget when thinking is enabled.
pub const THINKING_MAX_TOKENS: u32 = 20480;

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            top_k: 20,
            min_p: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl SamplingParams {
    pub fn with_max_tokens(self, max_tokens: u32) -> Self {
        Self { max_tokens, ..self }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |what: &str| Err(GatewayError::InvalidRequest(what.to_string()));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return bad("top_p must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.min_p) {
            return bad("min_p must be in [0, 1]");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub template: TemplateId,
    pub payload: String,
    pub prompt_text: String,
    pub thinking_enabled: bool,
    pub sampling: SamplingParams,
    /// Distinguishes repeated samples of the same prompt.
    #[serde(default)]
    pub sample_index: Option<u32>,
}

impl ChatRequest {
    pub fn new(
        model_name: impl Into<String>,
        template: TemplateId,
        payload: impl Into<String>,
        thinking_enabled: bool,
        sampling: SamplingParams,
    ) -> Result<Self, GatewayError> {
        let payload = payload.into();
        let prompt_text = render_prompt(template, &payload)?;
        Ok(Self {
            model_name: model_name.into(),
            template,
            payload,
            prompt_text,
            thinking_enabled,
            sampling,
            sample_index: None,
        })
    }

    pub fn with_sample_index(self, index: u32) -> Self {
        Self {
            sample_index: Some(index),
            ..self
        }
    }

    /// Stable hex key over template, payload, thinking flag and sample index.
    /// Model name and sampling parameters are deliberately excluded so that
    /// mock fixtures survive configuration changes.
    pub fn key(&self) -> String {
        request_key(
            self.template,
            &self.payload,
            self.thinking_enabled,
            self.sample_index,
        )
    }
}

pub fn request_key(
    template: TemplateId,
    payload: &str,
    thinking_enabled: bool,
    sample_index: Option<u32>,
) -> String {
    let mut h = Sha256::new();
    h.update(template.as_str().as_bytes());
    h.update([0]);
    h.update(payload.as_bytes());
    h.update([0, u8::from(thinking_enabled)]);
    if let Some(i) = sample_index {
        h.update([0]);
        h.update(i.to_le_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl fmt::Display for FinishReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FinishReason::Stop => "stop",
            FinishReason::Length => "length",
            FinishReason::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub answer_text: String,
    pub thinking_text: Option<String>,
    pub finish_reason: FinishReason,
}

impl GenerationResult {
    /// Output hit the token budget; the answer is likely incomplete.
    pub fn is_truncated(&self) -> bool {
        self.finish_reason == FinishReason::Length
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("endpoint error HTTP {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Backend(BackendError),
}

/// Markers around the reasoning segment of a completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkDelimiters {
    pub open: String,
    pub close: String,
}

impl Default for ThinkDelimiters {
    fn default() -> Self {
        Self {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

impl ThinkDelimiters {
    /// Returns `(thinking, answer)`. A missing opening marker is tolerated;
    /// an opening marker with no close means generation stopped mid-thought.
    pub fn split<'a>(&self, content: &'a str) -> (Option<&'a str>, &'a str) {
        if let Some(close) = content.find(&self.close) {
            let before = &content[..close];
            let thinking = before
                .find(&self.open)
                .map_or(before, |o| &before[o + self.open.len()..]);
            (
                Some(thinking.trim()),
                content[close + self.close.len()..].trim(),
            )
        } else if let Some(open) = content.find(&self.open) {
            (Some(content[open + self.open.len()..].trim()), "")
        } else {
            (None, content.trim())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts including the first.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64 << (retry.saturating_sub(1)).min(20);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightPermit<'_> {
        let mut active = self.active.lock().expect("in-flight counter poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("in-flight counter poisoned");
        }
        *active += 1;
        InFlightPermit(self)
    }
}

struct InFlightPermit<'a>(&'a InFlight);

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().expect("in-flight counter poisoned");
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared entry point for model calls. Safe to use from many threads; at
/// most `max_in_flight` backend calls run at once.
pub struct Gateway {
    backend: Box<dyn Backend>,
    think: ThinkDelimiters,
    retry: RetryPolicy,
    in_flight: InFlight,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("think", &self.think)
            .field("retry", &self.retry)
            .field("max_in_flight", &self.in_flight.limit)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static) -> Self {
        Self {
            backend: Box::new(backend),
            think: ThinkDelimiters::default(),
            retry: RetryPolicy::default(),
            in_flight: InFlight {
                limit: 4,
                active: Mutex::new(0),
                freed: Condvar::new(),
            },
        }
    }

    pub fn mock_dir(dir: impl Into<std::path::PathBuf>) -> Self {
        Self::new(MockBackend::from_dir(dir))
    }

    pub fn with_think_delimiters(mut self, think: ThinkDelimiters) -> Self {
        self.think = think;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.in_flight.limit = limit.max(1);
        self
    }

    /// Runs one request, retrying transient failures with exponential
    /// backoff. A truncated generation is returned as `Ok` with
    /// `finish_reason == Length`; callers decide how to surface it.
    pub fn complete(&self, request: &ChatRequest) -> Result<GenerationResult, GatewayError> {
        request.sampling.validate()?;
        if request.prompt_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.backend.generate(request)
            };
            match outcome {
                Ok(raw) => return Ok(self.finish(request, raw)),
                Err(BackendError::Transient(msg)) => {
                    log::warn!("attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                }
                Err(BackendError::Endpoint { status, body }) => {
                    return Err(GatewayError::Endpoint { status, body })
                }
                Err(other) => return Err(GatewayError::Backend(other)),
            }
        }
        Err(GatewayError::Transport { attempts, last })
    }

    fn finish(&self, request: &ChatRequest, raw: RawCompletion) -> GenerationResult {
        let (inline_thinking, answer) = self.think.split(&raw.content);
        let thinking_text = if request.thinking_enabled {
            raw.reasoning
                .or_else(|| inline_thinking.map(str::to_string))
        } else {
            None
        };
        if raw.finish_reason == FinishReason::Length {
            log::warn!("generation for request {} hit max_tokens", request.key());
        }
        GenerationResult {
            answer_text: answer.to_string(),
            thinking_text,
            finish_reason: raw.finish_reason,
        }
    }
}
