//! Multi-turn dialogue construction from single-turn QA pairs.
//!
//! Each pair goes through generation, evidence judgment, optional evidence
//! integration when too few counselor turns are grounded in the source, and
//! a four-axis refinement. [`run_pipeline`] drives the steps per item with a
//! resumable checkpoint.

pub mod checkpoint;
pub mod evidence;
pub mod pipeline;
pub mod prompts;
pub mod steps;
pub mod transcript;

pub use checkpoint::{Checkpoint, StageRecord};
pub use evidence::{ground_label, parse_evidence_report, EvidenceParseError, EvidenceReport};
pub use pipeline::{run_pipeline, DialogueSink, ParkedItem, PipelineError, PipelineOptions, PipelineSummary};
pub use prompts::PromptSet;
pub use steps::{
    generate_dialogue, integrate_evidence, judge_evidence, parse_refine_reply, refine_dialogue, FLAG_LOW_EVIDENCE,
    FLAG_SAFETY_FLOOR, FLAG_SCORES_MISSING, REJECT_GENERATION_PARSE,
};
pub use transcript::{parse_transcript, render_transcript, Markers, TranscriptError};

use crate::gateway::ModelSpec;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

pub const DIALOGUE_SCHEMA: &str = "dialogue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Integration runs while the supported fraction is below this.
    pub support_threshold: f64,
    pub max_integration_rounds: u32,
    pub min_turns: usize,
    pub model: ModelSpec,
    /// Directory of `<step>.txt` templates overriding the defaults.
    pub prompt_dir: Option<PathBuf>,
    pub extra_seeker_markers: Vec<String>,
    pub extra_counselor_markers: Vec<String>,
    #[serde(skip)]
    pub prompts: PromptSet,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            support_threshold: 0.5,
            max_integration_rounds: 1,
            min_turns: 4,
            model: ModelSpec::default(),
            prompt_dir: None,
            extra_seeker_markers: Vec::new(),
            extra_counselor_markers: Vec::new(),
            prompts: PromptSet::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("support_threshold {0} outside [0,1]")]
    Threshold(f64),
    #[error("min_turns must be at least 2, got {0}")]
    MinTurns(usize),
    #[error("loading prompts from {path}: {source}")]
    Prompts { path: PathBuf, source: std::io::Error },
}

impl PipelineConfig {
    /// Checks the bounds and loads prompt overrides.
    pub fn prepare(mut self) -> Result<Self, ConfigError> {
        if !(0.0..=1.0).contains(&self.support_threshold) {
            return Err(ConfigError::Threshold(self.support_threshold));
        }
        if self.min_turns < 2 {
            return Err(ConfigError::MinTurns(self.min_turns));
        }
        if let Some(dir) = &self.prompt_dir {
            self.prompts =
                PromptSet::load_dir(dir).map_err(|source| ConfigError::Prompts { path: dir.clone(), source })?;
        }
        Ok(self)
    }

    pub fn markers(&self) -> Markers {
        Markers::new(&self.extra_seeker_markers, &self.extra_counselor_markers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(PipelineConfig { support_threshold: 1.5, ..Default::default() }.prepare().is_err());
        assert!(PipelineConfig { min_turns: 1, ..Default::default() }.prepare().is_err());
        assert!(PipelineConfig::default().prepare().is_ok());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"support_threshold": 0.6, "oops": 1}"#).is_err());
        let c: PipelineConfig = serde_json::from_str(r#"{"support_threshold": 0.6}"#).unwrap();
        assert_eq!((c.support_threshold, c.min_turns), (0.6, 4));
    }
}
