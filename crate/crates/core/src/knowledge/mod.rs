//! Knowledge QA from textbooks.
//!
//! Books are cut into spans, a generator writes one seed question per span,
//! two students answer it (one with retrieved spans as context, one
//! without), and a teacher picks the better answer. Adjudicated items go to
//! manual validation. Textbook exercises are imported directly.

pub mod exercises;
pub mod forge;
pub mod index;
pub mod segment;

pub use exercises::{load_exercises, Exercise, EXERCISE_SCHEMA};
pub use forge::{
    adjudicate, answer_students, enqueue_for_review, generate_seed_qa, parse_seed_qa, parse_verdict, plain_prompt,
    rag_prompt, span_ref, AdjudicateError, EnqueueError, KnowledgeSink, StudentAnswers,
};
pub use index::{Hit, RetrievalIndex, DEFAULT_K};
pub use segment::{boundaries, segment_book, Boundary, SegmentConfig, SegmentError, Segmentation};

use crate::bench::TokenizerMode;
use crate::gateway::{Gateway, ModelSpec};
use crate::model::{BookSpan, KnowledgeItem, KnowledgeStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const KNOWLEDGE_SCHEMA: &str = "knowledge_item";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    pub segment: SegmentConfig,
    /// Spans retrieved for the augmented student.
    pub k: usize,
    pub tokenizer: TokenizerMode,
    pub generator: ModelSpec,
    pub student: ModelSpec,
    pub teacher: ModelSpec,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            segment: SegmentConfig::default(),
            k: DEFAULT_K,
            tokenizer: TokenizerMode::default(),
            generator: ModelSpec::default(),
            student: ModelSpec::default(),
            teacher: ModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Book {
    pub id: String,
    pub text: String,
}

/// Every regular file in `dir`, sorted by name; the id is the file stem.
pub fn load_books(dir: &Path) -> std::io::Result<Vec<Book>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Book { id, text })
        })
        .collect()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct KnowledgeSummary {
    pub books: usize,
    pub spans: usize,
    pub hard_cuts: usize,
    /// Spans with no usable seed question, or whose generator call failed.
    pub skipped_spans: Vec<String>,
    pub drafted: usize,
    pub answered: usize,
    pub adjudicated: usize,
    #[serde(skip)]
    pub items: Vec<KnowledgeItem>,
}

fn forge_span(span: &BookSpan, index: &RetrievalIndex, gw: &Gateway, cfg: &KnowledgeConfig) -> Option<KnowledgeItem> {
    let sref = span_ref(span);
    let (question, seed_answer) = match generate_seed_qa(span, gw, &cfg.generator) {
        Ok(Some(qa)) => qa,
        Ok(None) => return None,
        Err(e) => {
            log::warn!("{sref}: skipped, generator failed: {e}");
            return None;
        }
    };
    let students = answer_students(&question, index, cfg.k, gw, &cfg.student);
    let mut item = KnowledgeItem {
        id: format!("kq-{sref}"),
        span_ref: sref,
        question,
        seed_answer,
        rag_answer: None,
        plain_answer: None,
        teacher_choice: None,
        teacher_rationale: None,
        status: KnowledgeStatus::Drafted,
        flags: Vec::new(),
    };
    if students.rag.is_none() || students.plain.is_none() {
        // Student answers are stored as a pair; a lone answer is dropped.
        item.add_flag(forge::FLAG_STUDENT_MISSING);
        return Some(item);
    }
    item.rag_answer = students.rag;
    item.plain_answer = students.plain;
    item.status = KnowledgeStatus::Answered;
    match adjudicate(item.clone(), gw, &cfg.teacher) {
        Ok(done) => Some(done),
        Err(e) => {
            log::warn!("{}: teacher failed: {e}", item.id);
            item.add_flag(forge::FLAG_TEACHER_UNAVAILABLE);
            Some(item)
        }
    }
}

/// Segments every book, indexes all spans together and forges one item per
/// span. Items come back in book, then span order.
pub fn forge_knowledge(books: &[Book], gw: &Gateway, cfg: &KnowledgeConfig, jobs: usize) -> Result<KnowledgeSummary, SegmentError> {
    let mut summary = KnowledgeSummary { books: books.len(), ..Default::default() };
    let mut spans = Vec::new();
    for b in books {
        if b.text.is_empty() {
            log::warn!("{}: empty book skipped", b.id);
            continue;
        }
        let seg = segment_book(&b.id, &b.text, &cfg.segment)?;
        summary.hard_cuts += seg.hard_cuts.len();
        spans.extend(seg.spans);
    }
    summary.spans = spans.len();
    let index = RetrievalIndex::build(spans, cfg.tokenizer);
    let work = || index.spans().par_iter().map(|s| (span_ref(s), forge_span(s, &index, gw, cfg))).collect::<Vec<_>>();
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => index.spans().iter().map(|s| (span_ref(s), forge_span(s, &index, gw, cfg))).collect(),
    };
    for (sref, item) in results {
        match item {
            None => summary.skipped_spans.push(sref),
            Some(item) => {
                match item.status {
                    KnowledgeStatus::Drafted => summary.drafted += 1,
                    KnowledgeStatus::Answered => summary.answered += 1,
                    _ => summary.adjudicated += 1,
                }
                summary.items.push(item);
            }
        }
    }
    Ok(summary)
}
