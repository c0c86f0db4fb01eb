use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

const DEFAULT_MANIFEST: &str = include_str!("../../topics.json");
const UNLABELED: &str = "unlabeled";

/// Topic label of a pair. Labels are checked against a [`TopicManifest`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Topic {
    #[default]
    Unlabeled,
    Label(String),
}

impl Topic {
    pub fn label(&self) -> Option<&str> {
        match self {
            Topic::Unlabeled => None,
            Topic::Label(l) => Some(l),
        }
    }

    pub fn is_labeled(&self) -> bool {
        matches!(self, Topic::Label(_))
    }
}

impl From<String> for Topic {
    fn from(s: String) -> Self {
        if s.is_empty() || s == UNLABELED {
            Topic::Unlabeled
        } else {
            Topic::Label(s)
        }
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> Self {
        match t {
            Topic::Unlabeled => UNLABELED.to_string(),
            Topic::Label(l) => l,
        }
    }
}

#[derive(Debug, Error)]
pub enum TopicManifestError {
    #[error("reading topic manifest {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing topic manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("topic manifest must list exactly {expected} distinct topics, found {found}")]
    Count { expected: usize, found: usize },
}

/// The fixed set of nine topic labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicManifest {
    topics: Vec<String>,
}

impl TopicManifest {
    pub const SIZE: usize = 9;

    pub fn from_json(text: &str) -> Result<Self, TopicManifestError> {
        let manifest: TopicManifest = serde_json::from_str(text)?;
        let mut distinct = manifest.topics.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != Self::SIZE || manifest.topics.len() != Self::SIZE {
            return Err(TopicManifestError::Count { expected: Self::SIZE, found: distinct.len() });
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self, TopicManifestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| TopicManifestError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn topics(&self) -> &[String] {
        &self.topics
    }

    pub fn contains(&self, label: &str) -> bool {
        self.topics.iter().any(|t| t == label)
    }

    /// Case- and punctuation-insensitive lookup of a classifier reply.
    pub fn resolve(&self, reply: &str) -> Topic {
        let wanted = normalize(reply);
        self.topics
            .iter()
            .find(|t| normalize(t) == wanted)
            .map(|t| Topic::Label(t.clone()))
            .unwrap_or(Topic::Unlabeled)
    }
}

impl Default for TopicManifest {
    fn default() -> Self {
        Self::from_json(DEFAULT_MANIFEST).expect("bundled topic manifest is valid")
    }
}

fn normalize(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| (c.is_ascii_punctuation() && c != '&') || "“”‘’「」《》。：".contains(c))
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
