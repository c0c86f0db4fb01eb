//! OpenAI-compatible `/chat/completions` over HTTPS.

use super::{ChatRequest, FinishReason, Provider, ProviderError, ProviderReply, Usage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenAiConfig {
    pub id: String,
    /// e.g. `https://api.example.com/v1`
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            id: "openai".into(),
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "PSYFORGE_API_KEY".into(),
            timeout_secs: 120,
        }
    }
}

pub struct OpenAiCompatible {
    id: String,
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiCompatible {
    pub fn new(config: &OpenAiConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            id: config.id.clone(),
            endpoint: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            agent,
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }
}

pub(crate) fn request_body(req: &ChatRequest) -> Value {
    let messages: Vec<Value> =
        req.messages.iter().map(|m| json!({"role": m.role.as_str(), "content": m.text})).collect();
    let mut body = json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
    });
    if let Some(n) = req.max_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

#[derive(Deserialize)]
struct CompletionBody {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: Option<ChoiceMessage>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

pub(crate) fn parse_body(body: Value) -> Result<ProviderReply, ProviderError> {
    let parsed: CompletionBody =
        serde_json::from_value(body).map_err(|e| ProviderError::Fatal(format!("unexpected response shape: {e}")))?;
    let choice = parsed.choices.into_iter().next().ok_or_else(|| ProviderError::Fatal("no choices".into()))?;
    let finish_reason = match choice.finish_reason.as_deref() {
        Some("length") => FinishReason::Length,
        Some("stop") | None => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    };
    let text = if finish_reason == FinishReason::Error {
        String::new()
    } else {
        choice.message.and_then(|m| m.content).unwrap_or_default()
    };
    let usage = parsed
        .usage
        .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
        .unwrap_or_default();
    Ok(ProviderReply { text, finish_reason, usage })
}

fn classify(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::StatusCode(code) if code == 408 || code == 409 || code == 429 || code >= 500 => {
            ProviderError::Transient(format!("HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => ProviderError::Fatal(format!("HTTP {code}")),
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            ProviderError::Transient(err.to_string())
        }
        other => ProviderError::Fatal(other.to_string()),
    }
}

impl Provider for OpenAiCompatible {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send_json(request_body(request)).map_err(classify)?;
        let body: Value = response.body_mut().read_json().map_err(classify)?;
        parse_body(body)
    }
}
