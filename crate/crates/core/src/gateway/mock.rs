//! Scriptable offline provider.
//!
//! Rules are tried in order against the joined request text; the first whose
//! pattern matches decides the reply. A sequence rule hands out its replies
//! one per call *for each distinct request*, repeating the last one, so that
//! "fail twice then succeed" scripts behave the same under any thread
//! interleaving.

use super::{CacheKey, ChatRequest, Provider, ProviderError, ProviderReply};
use regex::{Captures, Regex};
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(from = "ReplySpec")]
pub enum MockReply {
    Text(String),
    Transient(String),
    Fatal(String),
}

/// Script spelling: a bare string, `{"transient": msg}` or `{"fatal": msg}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum ReplySpec {
    Text(String),
    Transient { transient: String },
    Fatal { fatal: String },
}

impl From<ReplySpec> for MockReply {
    fn from(s: ReplySpec) -> Self {
        match s {
            ReplySpec::Text(t) => MockReply::Text(t),
            ReplySpec::Transient { transient } => MockReply::Transient(transient),
            ReplySpec::Fatal { fatal } => MockReply::Fatal(fatal),
        }
    }
}

type ReplyFn = dyn Fn(&ChatRequest, &Captures<'_>) -> MockReply + Send + Sync;

#[derive(Clone)]
pub enum MockAction {
    Sequence { replies: Vec<MockReply>, expand: bool },
    Func(Arc<ReplyFn>),
}

#[derive(Clone)]
pub struct MockRule {
    pattern: Regex,
    action: MockAction,
}

impl MockRule {
    pub fn sequence(pattern: &str, replies: Vec<MockReply>) -> Result<Self, regex::Error> {
        Ok(Self { pattern: Regex::new(pattern)?, action: MockAction::Sequence { replies, expand: false } })
    }

    pub fn text(pattern: &str, reply: impl Into<String>) -> Result<Self, regex::Error> {
        Self::sequence(pattern, vec![MockReply::Text(reply.into())])
    }

    /// Reply computed from the request and the pattern's captures.
    pub fn func<F>(pattern: &str, f: F) -> Result<Self, regex::Error>
    where
        F: Fn(&ChatRequest, &Captures<'_>) -> MockReply + Send + Sync + 'static,
    {
        Ok(Self { pattern: Regex::new(pattern)?, action: MockAction::Func(Arc::new(f)) })
    }
}

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("reading mock script {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing mock script: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rule {index}: bad pattern: {source}")]
    Pattern { index: usize, source: regex::Error },
    #[error("rule {index} has no replies")]
    Empty { index: usize },
}

/// JSON form of a mock script.
///
/// ```json
/// {"rules": [{"pattern": "multi round", "replies": ["User: hi\nPsychological assistant: hello"]}],
///  "default": "I cannot help with that."}
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    pub default: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub pattern: String,
    pub replies: Vec<MockReply>,
    /// Expand `$1`/`${name}` capture references in text replies.
    #[serde(default)]
    pub expand: bool,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, MockScriptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MockScriptError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn into_provider(self, id: &str) -> Result<MockProvider, MockScriptError> {
        let mut rules = Vec::with_capacity(self.rules.len());
        for (index, r) in self.rules.into_iter().enumerate() {
            if r.replies.is_empty() {
                return Err(MockScriptError::Empty { index });
            }
            let pattern = Regex::new(&r.pattern).map_err(|source| MockScriptError::Pattern { index, source })?;
            rules.push(MockRule { pattern, action: MockAction::Sequence { replies: r.replies, expand: r.expand } });
        }
        Ok(MockProvider::new(id, rules, MockReply::Text(self.default)))
    }
}

pub struct MockProvider {
    id: String,
    rules: Vec<MockRule>,
    default: MockReply,
    positions: Mutex<HashMap<(usize, CacheKey), usize>>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(id: &str, rules: Vec<MockRule>, default: MockReply) -> Self {
        Self { id: id.to_string(), rules, default, positions: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0) }
    }

    /// Number of `send` calls so far, cache hits excluded.
    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn choose(&self, request: &ChatRequest) -> MockReply {
        let text = request.joined_text();
        for (index, rule) in self.rules.iter().enumerate() {
            let Some(caps) = rule.pattern.captures(&text) else { continue };
            return match &rule.action {
                MockAction::Func(f) => f(request, &caps),
                MockAction::Sequence { replies, expand } => {
                    let key = (index, request.cache_key());
                    let pos = {
                        let mut positions = self.positions.lock().unwrap_or_else(|e| e.into_inner());
                        let p = positions.entry(key).or_insert(0);
                        let current = *p;
                        *p += 1;
                        current
                    };
                    let reply = replies[pos.min(replies.len() - 1)].clone();
                    match reply {
                        MockReply::Text(t) if *expand => {
                            let mut out = String::new();
                            caps.expand(&t, &mut out);
                            MockReply::Text(out)
                        }
                        other => other,
                    }
                }
            };
        }
        self.default.clone()
    }
}

impl Provider for MockProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match self.choose(request) {
            MockReply::Text(t) => Ok(ProviderReply::stop(t)),
            MockReply::Transient(msg) => Err(ProviderError::Transient(msg)),
            MockReply::Fatal(msg) => Err(ProviderError::Fatal(msg)),
        }
    }
}
