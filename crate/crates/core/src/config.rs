//! The JSON configuration file shared by all subcommands.
//!
//! Every section is optional and unknown keys are rejected. A minimal file
//! is `{}`; `Config::default()` documents every default.

use crate::bench::{EvalConfig, Extractor, HashingEmbedder, OrthogonalStub, TokenizerMode};
use crate::dialogue::PipelineConfig;
use crate::gateway::{
    CacheMode, ChatRequest, Gateway, MockScript, ModelSpec, Provider, ProviderError, ProviderReply, ReplayCache,
    RetryPolicy,
};
use crate::ingest::CleanPolicy;
use crate::knowledge::KnowledgeConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    /// Answers only from the replay cache. `provider_id` must match the
    /// provider that warmed the cache, since it is part of the cache key.
    Replay {
        #[serde(default = "replay_id")]
        provider_id: String,
    },
    /// Scripted replies from a JSON rule file.
    Mock { script: PathBuf },
    #[cfg(feature = "http-provider")]
    OpenaiCompatible(crate::gateway::OpenAiConfig),
}

fn replay_id() -> String {
    "replay".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySettings {
    pub default_model: String,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub min_interval_ms: u64,
    /// Replay cache file; none disables caching.
    pub cache: Option<PathBuf>,
    pub cache_mode: CacheMode,
    pub seed: u64,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            default_model: String::new(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            min_interval_ms: 0,
            cache: None,
            cache_mode: CacheMode::ReadWrite,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSettings {
    pub clean: CleanPolicy,
    /// Topic manifest; when set, kept pairs are labeled by the model.
    pub topics: Option<PathBuf>,
    pub label_model: ModelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderChoice {
    #[default]
    Hashing,
    OrthogonalStub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub tokenizer: TokenizerMode,
    /// Answer-declaration patterns; none means the built-in list.
    pub patterns: Option<Vec<String>>,
    pub trailing_run: bool,
    pub embedder: EmbedderChoice,
    pub model: ModelSpec,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerMode::default(),
            patterns: None,
            trailing_run: true,
            embedder: EmbedderChoice::default(),
            model: ModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub provider: ProviderConfig,
    pub gateway: GatewaySettings,
    pub ingest: IngestSettings,
    pub pipeline: PipelineConfig,
    pub knowledge: KnowledgeConfig,
    pub eval: EvalSettings,
    /// Review store directory used by `forge`, `serve` and `export`.
    pub review_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::Replay { provider_id: replay_id() },
            gateway: GatewaySettings::default(),
            ingest: IngestSettings::default(),
            pipeline: PipelineConfig::default(),
            knowledge: KnowledgeConfig::default(),
            eval: EvalSettings::default(),
            review_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// Relative paths inside the file are taken relative to the file.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let ProviderConfig::Mock { script } = &mut self.provider {
            fix(script);
        }
        if let Some(p) = &mut self.gateway.cache {
            fix(p);
        }
        if let Some(p) = &mut self.ingest.topics {
            fix(p);
        }
        if let Some(p) = &mut self.pipeline.prompt_dir {
            fix(p);
        }
        if let Some(p) = &mut self.review_dir {
            fix(p);
        }
    }

    pub fn provider(&self) -> Result<Arc<dyn Provider>, ConfigError> {
        Ok(match &self.provider {
            ProviderConfig::Replay { provider_id } => Arc::new(ReplayOnly(provider_id.clone())),
            ProviderConfig::Mock { script } => {
                let script = MockScript::load(script).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Arc::new(script.into_provider("mock").map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            #[cfg(feature = "http-provider")]
            ProviderConfig::OpenaiCompatible(c) => Arc::new(crate::gateway::OpenAiCompatible::new(c)),
        })
    }

    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let g = &self.gateway;
        let mut b = Gateway::builder(self.provider()?)
            .default_model(g.default_model.clone())
            .retry(g.retry)
            .max_in_flight(g.max_in_flight.max(1))
            .min_interval(Duration::from_millis(g.min_interval_ms))
            .cache_mode(g.cache_mode)
            .seed(g.seed);
        if let Some(path) = &g.cache {
            let cache = ReplayCache::open(path)
                .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            b = b.cache(Arc::new(cache));
        }
        Ok(b.build())
    }

    pub fn eval_config(&self, jobs: usize) -> Result<EvalConfig, ConfigError> {
        let e = &self.eval;
        let extractor = match &e.patterns {
            Some(p) => Extractor::new(p.iter().map(String::as_str))
                .map_err(|err| ConfigError::Invalid(format!("eval.patterns: {err}")))?,
            None => Extractor::default(),
        }
        .with_trailing_run(e.trailing_run);
        let embedder: Arc<dyn crate::bench::Embedder> = match e.embedder {
            EmbedderChoice::Hashing => Arc::new(HashingEmbedder::default()),
            EmbedderChoice::OrthogonalStub => Arc::new(OrthogonalStub::new()),
        };
        Ok(EvalConfig { extractor, tokenizer: e.tokenizer, embedder, jobs })
    }
}

/// Fails every request that reaches it, so only cache hits succeed.
struct ReplayOnly(String);

impl Provider for ReplayOnly {
    fn id(&self) -> &str {
        &self.0
    }

    fn send(&self, _request: &ChatRequest) -> Result<ProviderReply, ProviderError> {
        Err(ProviderError::Fatal("no provider configured and the reply is not in the replay cache".into()))
    }
}
