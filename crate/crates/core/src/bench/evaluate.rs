use super::bertscore::{bertscore_tokens, Embedder, HashingEmbedder};
use super::extract::Extractor;
use super::metrics::{bleu4_tokens, rouge1_f1_tokens, rouge_l_f1_tokens};
use super::score::{score_mmcq, score_smcq};
use super::tokenize::{tokenize, TokenizerMode};
use crate::gateway::{Gateway, ModelSpec};
use crate::model::{read_jsonl, BenchItem, BenchKind, EvalOutcome, Extracted, JsonlError, TextScores};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

pub const TRANSCRIPT_SCHEMA: &str = "transcript";
pub const OUTCOME_SCHEMA: &str = "eval_outcome";

/// One recorded model reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub item_id: String,
    pub raw_output: String,
}

pub fn load_transcript(path: &Path) -> Result<HashMap<String, String>, JsonlError> {
    let read = read_jsonl::<TranscriptEntry>(path, TRANSCRIPT_SCHEMA)?;
    for d in &read.diagnostics {
        log::warn!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(read.items.into_iter().map(|e| (e.item_id, e.raw_output)).collect())
}

/// Where replies come from.
pub enum AnswerSource<'a> {
    Gateway { gateway: &'a Gateway, spec: ModelSpec },
    Transcript(HashMap<String, String>),
}

impl AnswerSource<'_> {
    fn answer(&self, item: &BenchItem) -> Option<String> {
        match self {
            AnswerSource::Gateway { gateway, spec } => {
                let (system, user) = build_prompt(item);
                match gateway.ask(spec, Some(system), user) {
                    Ok(text) => Some(text),
                    Err(e) => {
                        log::warn!("{}: no answer: {e}", item.id);
                        None
                    }
                }
            }
            AnswerSource::Transcript(map) => {
                let found = map.get(&item.id).cloned();
                if found.is_none() {
                    log::warn!("{}: not in transcript", item.id);
                }
                found
            }
        }
    }
}

pub struct EvalConfig {
    pub extractor: Extractor,
    pub tokenizer: TokenizerMode,
    pub embedder: Arc<dyn Embedder>,
    /// Upper bound on items evaluated concurrently.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            extractor: Extractor::default(),
            tokenizer: TokenizerMode::default(),
            embedder: Arc::new(HashingEmbedder::default()),
            jobs: 4,
        }
    }
}

const MCQ_SYSTEM: &str = "你是一名心理咨询领域的专家，正在参加心理咨询师资格考试。";
const CASE_SYSTEM: &str = "你是一名经验丰富的心理咨询师。请根据给出的案例描述回答问题。";

/// Zero-shot task description plus the question, as `(system, user)`.
pub fn build_prompt(item: &BenchItem) -> (&'static str, String) {
    let mut user = String::new();
    match item.kind {
        BenchKind::CaseQa => {
            if let Some(bg) = &item.case_background {
                user.push_str("案例描述：\n");
                user.push_str(bg);
                user.push_str("\n\n");
            }
            user.push_str("问题：");
            user.push_str(&item.stem);
            return (CASE_SYSTEM, user);
        }
        BenchKind::Smcq => user.push_str("以下是一道单项选择题，只有一个正确选项。请在最后一行以“答案：X”的格式给出答案。\n\n"),
        BenchKind::Mmcq => user.push_str(
            "以下是一道多项选择题，有两个或以上正确选项。请在最后一行以“答案：X、Y”的格式给出全部正确选项。\n\n",
        ),
    }
    if let Some(bg) = &item.case_background {
        user.push_str("案例：");
        user.push_str(bg);
        user.push('\n');
    }
    user.push_str(&item.stem);
    user.push('\n');
    for (letter, text) in &item.options {
        user.push_str(&format!("{letter}. {text}\n"));
    }
    (MCQ_SYSTEM, user)
}

/// Scores one reply. `None` means no reply was obtained.
pub fn score_item(item: &BenchItem, raw: Option<&str>, config: &EvalConfig) -> EvalOutcome {
    let raw_output = raw.unwrap_or_default().to_string();
    let mut out = EvalOutcome {
        item_id: item.id.clone(),
        kind: item.kind,
        section: item.section,
        level: item.level,
        raw_output: raw_output.clone(),
        extracted: Extracted::Unanswered,
        standard_score: 0.0,
        elastic_score: None,
        text_scores: None,
    };
    match (item.kind, &item.correct) {
        (BenchKind::CaseQa, _) => {
            let reference = item.reference().unwrap_or_default();
            let cand = tokenize(&raw_output, config.tokenizer);
            let refr = tokenize(reference, config.tokenizer);
            let bertscore = match raw {
                None => None,
                Some(_) => match bertscore_tokens(&cand, &refr, config.embedder.as_ref()) {
                    Ok(s) => Some(s.f1),
                    Err(e) => {
                        log::warn!("{}: {e}", item.id);
                        None
                    }
                },
            };
            out.text_scores = Some(TextScores {
                r1: rouge1_f1_tokens(&cand, &refr),
                rl: rouge_l_f1_tokens(&cand, &refr),
                b4: bleu4_tokens(&cand, &refr),
                bertscore,
            });
            if raw.is_some() {
                out.extracted = Extracted::Text(raw_output);
            }
        }
        (kind, _) => {
            let correct = item.correct_choices().cloned().unwrap_or_default();
            if raw.is_some() {
                out.extracted = config.extractor.extract(&raw_output, item);
            }
            if kind == BenchKind::Smcq {
                out.standard_score = score_smcq(&out.extracted, &correct);
            } else {
                let (standard, elastic) = score_mmcq(&out.extracted, &correct);
                out.standard_score = standard;
                out.elastic_score = Some(elastic);
            }
        }
    }
    out
}

/// Evaluates every item; failures become zero-scored outcomes, never errors.
/// Output is ordered by item id regardless of completion order.
pub fn evaluate_model(items: &[BenchItem], source: &AnswerSource<'_>, config: &EvalConfig) -> Vec<EvalOutcome> {
    let run = || -> Vec<EvalOutcome> {
        items.par_iter().map(|item| score_item(item, source.answer(item).as_deref(), config)).collect()
    };
    let mut outcomes = match rayon::ThreadPoolBuilder::new().num_threads(config.jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); evaluating serially");
            items.iter().map(|item| score_item(item, source.answer(item).as_deref(), config)).collect()
        }
    };
    outcomes.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    outcomes
}
