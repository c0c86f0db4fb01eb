//! Provider-agnostic chat completion.
//!
//! Every LLM call in the crate goes through [`Gateway::complete`], which adds
//! a content-addressed replay cache, bounded concurrency, a minimum request
//! interval, and retries with exponential backoff on transient failures.
//! [`MockProvider`] makes every pipeline runnable offline.

mod cache;
#[cfg(feature = "http-provider")]
mod http;
mod limiter;
mod mock;

pub use cache::{CacheKey, CachedResponse, ReplayCache};
#[cfg(feature = "http-provider")]
pub use http::{OpenAiCompatible, OpenAiConfig};
pub use limiter::Limiter;
pub use mock::{MockAction, MockProvider, MockReply, MockRule, MockScript, MockScriptError, ScriptRule};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

impl MessageRole {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Self { role: MessageRole::System, text: text.into() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self { role: MessageRole::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: MessageRole::Assistant, text: text.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    #[default]
    ReadWrite,
    ReadOnly,
    Bypass,
}

impl std::str::FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "read-write" | "readwrite" | "rw" => Ok(CacheMode::ReadWrite),
            "read-only" | "readonly" | "ro" => Ok(CacheMode::ReadOnly),
            "bypass" | "off" => Ok(CacheMode::Bypass),
            other => Err(format!("unknown cache mode {other:?} (read-write, read-only, bypass)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub provider_id: String,
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default)]
    pub cache_mode: CacheMode,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages are empty".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(MessageRole::User) {
            return Err(GatewayError::InvalidRequest("last message must come from the user".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of(self)
    }

    /// All message texts joined by newlines; what mock rules match against.
    pub fn joined_text(&self) -> String {
        self.messages.iter().map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub from_cache: bool,
}

/// What a provider hands back for one attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
}

impl ProviderReply {
    pub fn stop(text: impl Into<String>) -> Self {
        Self { text: text.into(), finish_reason: FinishReason::Stop, usage: Usage::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: rate limits, timeouts, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Fatal(String),
}

pub trait Provider: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache-miss: no cached response for {0} in read-only mode")]
    CacheMiss(CacheKey),
    #[error("gave up after {attempts} attempts: {reason}")]
    Exhausted { attempts: u32, reason: String },
    #[error("{0}")]
    Fatal(String),
    #[error("provider {0:?} is not configured")]
    UnknownProvider(String),
    #[error("replay cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    pub fn is_cache_miss(&self) -> bool {
        matches!(self, GatewayError::CacheMiss(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests and mocks.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, base_delay: Duration::ZERO, max_delay: Duration::ZERO, jitter: false }
    }

    fn delay(&self, retry: u32, rng: &Mutex<StdRng>) -> Duration {
        let exp = self.base_delay.saturating_mul(1u32 << retry.min(16));
        let capped = exp.min(self.max_delay);
        if self.jitter && !capped.is_zero() {
            let factor: f64 = rng.lock().map(|mut r| r.gen_range(0.5..=1.0)).unwrap_or(1.0);
            capped.mul_f64(factor)
        } else {
            capped
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Which model a pipeline step talks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Empty means the gateway's own default model.
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { model_id: String::new(), temperature: 0.0, max_tokens: None }
    }
}

pub struct GatewayBuilder {
    provider: Arc<dyn Provider>,
    default_model: String,
    cache: Option<Arc<ReplayCache>>,
    cache_mode: CacheMode,
    retry: RetryPolicy,
    max_in_flight: usize,
    min_interval: Duration,
    seed: u64,
}

impl GatewayBuilder {
    pub fn default_model(mut self, model: impl Into<String>) -> Self {
        self.default_model = model.into();
        self
    }

    pub fn cache(mut self, cache: Arc<ReplayCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn cache_mode(mut self, mode: CacheMode) -> Self {
        self.cache_mode = mode;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn min_interval(mut self, d: Duration) -> Self {
        self.min_interval = d;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            provider: self.provider,
            default_model: self.default_model,
            cache: self.cache,
            cache_mode: self.cache_mode,
            retry: self.retry,
            limiter: Limiter::new(self.max_in_flight, self.min_interval),
            rng: Mutex::new(StdRng::seed_from_u64(self.seed)),
        }
    }
}

pub struct Gateway {
    provider: Arc<dyn Provider>,
    default_model: String,
    cache: Option<Arc<ReplayCache>>,
    cache_mode: CacheMode,
    retry: RetryPolicy,
    limiter: Limiter,
    rng: Mutex<StdRng>,
}

impl Gateway {
    pub fn builder(provider: Arc<dyn Provider>) -> GatewayBuilder {
        GatewayBuilder {
            provider,
            default_model: "default".into(),
            cache: None,
            cache_mode: CacheMode::ReadWrite,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            min_interval: Duration::ZERO,
            seed: 0,
        }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn limiter(&self) -> &Limiter {
        &self.limiter
    }

    /// Builds a request for `messages` using the gateway defaults and `spec`.
    pub fn request(&self, spec: &ModelSpec, messages: Vec<Message>) -> ChatRequest {
        let model_id = if spec.model_id.is_empty() { self.default_model.clone() } else { spec.model_id.clone() };
        ChatRequest {
            provider_id: self.provider.id().to_string(),
            model_id,
            messages,
            temperature: spec.temperature,
            max_tokens: spec.max_tokens,
            cache_mode: self.cache_mode,
        }
    }

    /// Shorthand: a single user message, text of a successful reply.
    pub fn ask(&self, spec: &ModelSpec, system: Option<&str>, user: String) -> Result<String, GatewayError> {
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = system {
            messages.push(Message::system(s));
        }
        messages.push(Message::user(user));
        let resp = self.complete(&self.request(spec, messages))?;
        match resp.finish_reason {
            FinishReason::Error => Err(GatewayError::Fatal("provider reported an error finish".into())),
            _ => Ok(resp.text),
        }
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        if request.provider_id != self.provider.id() {
            return Err(GatewayError::UnknownProvider(request.provider_id.clone()));
        }
        let key = request.cache_key();
        let use_cache = request.cache_mode != CacheMode::Bypass;
        if use_cache {
            if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
                return Ok(hit.into_response(true));
            }
            if request.cache_mode == CacheMode::ReadOnly {
                return Err(GatewayError::CacheMiss(key));
            }
        }

        let attempts = self.retry.max_retries + 1;
        let mut last_reason = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.retry.delay(attempt - 1, &self.rng);
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            let result = {
                let _permit = self.limiter.acquire();
                self.provider.send(request)
            };
            match result {
                Ok(reply) => {
                    if reply.finish_reason == FinishReason::Error {
                        return Ok(ChatResponse {
                            text: String::new(),
                            finish_reason: FinishReason::Error,
                            usage: reply.usage,
                            from_cache: false,
                        });
                    }
                    let cached = CachedResponse::from(reply);
                    if request.cache_mode == CacheMode::ReadWrite {
                        if let Some(cache) = &self.cache {
                            cache.put(key, cached.clone())?;
                        }
                    }
                    return Ok(cached.into_response(false));
                }
                Err(ProviderError::Transient(reason)) => {
                    log::debug!("attempt {} of {attempts} failed: {reason}", attempt + 1);
                    last_reason = reason;
                }
                Err(ProviderError::Fatal(reason)) => return Err(GatewayError::Fatal(reason)),
            }
        }
        Err(GatewayError::Exhausted { attempts, reason: last_reason })
    }
}
