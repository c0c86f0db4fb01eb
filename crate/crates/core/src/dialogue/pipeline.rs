use super::checkpoint::{Checkpoint, StageRecord};
use super::steps::{
    generate_dialogue, integrate_evidence, judge_evidence, refine_dialogue, FLAG_LOW_EVIDENCE, FLAG_SAFETY_FLOOR,
};
use super::PipelineConfig;
use crate::clock::{Clock, SystemClock};
use crate::gateway::{Gateway, GatewayError};
use crate::model::{Dialogue, DialogueStage, QaPair};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// Receives refined dialogues for human review. Must tolerate repeats.
pub trait DialogueSink: Sync {
    fn enqueue_dialogue(&self, d: &Dialogue) -> Result<(), String>;
}

pub struct PipelineOptions<'a> {
    pub jobs: usize,
    pub clock: Arc<dyn Clock>,
    /// Checked before every step; once set, items stop where they are.
    pub cancel: Option<Arc<AtomicBool>>,
    pub sink: Option<&'a dyn DialogueSink>,
}

impl Default for PipelineOptions<'_> {
    fn default() -> Self {
        Self { jobs: 4, clock: Arc::new(SystemClock), cancel: None, sink: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParkedItem {
    pub item_id: String,
    /// Last completed stage, if any.
    pub stage: Option<DialogueStage>,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PipelineSummary {
    pub total: usize,
    pub refined: usize,
    pub rejected: usize,
    pub integrated: usize,
    pub low_evidence: usize,
    pub safety_flagged: usize,
    pub enqueued: usize,
    /// Items that finished a stage in an earlier run.
    pub resumed: usize,
    pub interrupted: usize,
    /// Gateway failures; rerunning picks these up from their last stage.
    pub parked: Vec<ParkedItem>,
    /// Finished dialogues (refined or rejected), in input order.
    #[serde(skip)]
    pub dialogues: Vec<Dialogue>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] std::io::Error),
}

enum Outcome {
    Finished(Dialogue),
    Parked(ParkedItem),
    Interrupted,
}

struct Ctx<'a> {
    gw: &'a Gateway,
    cfg: &'a PipelineConfig,
    ckpt: &'a Checkpoint,
    opts: &'a PipelineOptions<'a>,
}

impl Ctx<'_> {
    fn cancelled(&self) -> bool {
        self.opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst))
    }

    fn record(&self, item_id: &str, d: &Dialogue, rounds: u32) -> std::io::Result<()> {
        self.ckpt.append(&StageRecord { item_id: item_id.to_string(), stage: d.stage, integration_rounds: rounds, dialogue: d.clone() })
    }

    fn run_item(&self, qa: &QaPair) -> Result<Outcome, std::io::Error> {
        let clock = self.opts.clock.as_ref();
        let (mut current, mut rounds) = match self.ckpt.latest(&qa.id) {
            Some(r) => (Some(r.dialogue.clone()), r.integration_rounds),
            None => (None, 0),
        };
        loop {
            let stage = current.as_ref().map(|d| d.stage);
            if matches!(stage, Some(DialogueStage::Refined | DialogueStage::Approved | DialogueStage::Rejected)) {
                return Ok(Outcome::Finished(current.expect("stage implies dialogue")));
            }
            if self.cancelled() {
                return Ok(Outcome::Interrupted);
            }
            let step: Result<Dialogue, GatewayError> = match (stage, current.take()) {
                (None, _) => generate_dialogue(qa, self.gw, self.cfg, clock),
                (Some(DialogueStage::Generated), Some(d)) => judge_evidence(d, qa, self.gw, self.cfg, clock).map(|(d, _)| d),
                (Some(DialogueStage::EvidenceJudged), Some(mut d)) => {
                    let low = d.support_ratio.unwrap_or(0.0) < self.cfg.support_threshold;
                    if low && self.cfg.max_integration_rounds > 0 {
                        integrate_evidence(d, qa, self.gw, self.cfg, clock).map(|(d, r)| {
                            rounds = r;
                            d
                        })
                    } else {
                        if low {
                            d.add_flag(FLAG_LOW_EVIDENCE);
                        }
                        refine_dialogue(d, self.gw, self.cfg, clock)
                    }
                }
                (Some(DialogueStage::Integrated), Some(d)) => refine_dialogue(d, self.gw, self.cfg, clock),
                (Some(_), _) => unreachable!("terminal stages return above"),
            };
            match step {
                Ok(d) => {
                    self.record(&qa.id, &d, rounds)?;
                    current = Some(d);
                }
                Err(e) => {
                    log::warn!("{}: parked at {stage:?}: {e}", qa.id);
                    return Ok(Outcome::Parked(ParkedItem { item_id: qa.id.clone(), stage, error: e.to_string() }));
                }
            }
        }
    }
}

/// Drives every pair to `Refined` (or `Rejected`), checkpointing after each
/// step. Rerunning with the same checkpoint directory resumes each item from
/// its last completed step.
pub fn run_pipeline(
    pairs: &[QaPair],
    gateway: &Gateway,
    config: &PipelineConfig,
    checkpoint_dir: &Path,
    options: &PipelineOptions<'_>,
) -> Result<PipelineSummary, PipelineError> {
    let ckpt = Checkpoint::open(checkpoint_dir)?;
    let ctx = Ctx { gw: gateway, cfg: config, ckpt: &ckpt, opts: options };
    let resumed = pairs.iter().filter(|p| ckpt.latest(&p.id).is_some()).count();
    let work = || pairs.par_iter().map(|qa| ctx.run_item(qa)).collect::<Vec<_>>();
    let results = match rayon::ThreadPoolBuilder::new().num_threads(options.jobs.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => pairs.iter().map(|qa| ctx.run_item(qa)).collect(),
    };
    let mut summary = PipelineSummary { total: pairs.len(), resumed, ..Default::default() };
    for r in results {
        match r? {
            Outcome::Finished(d) => {
                if d.stage == DialogueStage::Rejected {
                    summary.rejected += 1;
                } else {
                    summary.refined += 1;
                    if d.audit.iter().any(|a| a.stage == DialogueStage::Integrated) {
                        summary.integrated += 1;
                    }
                    if d.flags.iter().any(|f| f == FLAG_LOW_EVIDENCE) {
                        summary.low_evidence += 1;
                    }
                    if d.flags.iter().any(|f| f == FLAG_SAFETY_FLOOR) {
                        summary.safety_flagged += 1;
                    }
                    if let Some(sink) = options.sink {
                        match sink.enqueue_dialogue(&d) {
                            Ok(()) => summary.enqueued += 1,
                            Err(e) => log::warn!("{}: enqueue failed: {e}", d.id),
                        }
                    }
                }
                summary.dialogues.push(d);
            }
            Outcome::Parked(p) => summary.parked.push(p),
            Outcome::Interrupted => summary.interrupted += 1,
        }
    }
    Ok(summary)
}
