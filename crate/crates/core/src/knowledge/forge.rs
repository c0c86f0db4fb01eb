//! Seed questions, two students and a teacher, per book span.

use super::index::RetrievalIndex;
use crate::dialogue::prompts::render;
use crate::gateway::{Gateway, GatewayError, Message, ModelSpec};
use crate::model::{BookSpan, KnowledgeItem, KnowledgeStatus, StudentChoice};
use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

pub const SEED_PROMPT: &str = include_str!("../../prompts/seed_qa.txt");
pub const PLAIN_PROMPT: &str = include_str!("../../prompts/student_plain.txt");
pub const RAG_PROMPT: &str = include_str!("../../prompts/student_rag.txt");
pub const TEACHER_PROMPT: &str = include_str!("../../prompts/teacher.txt");

pub const FLAG_STUDENT_MISSING: &str = "student-missing";
pub const FLAG_VERDICT_UNPARSED: &str = "verdict-unparsed";
pub const FLAG_TEACHER_UNAVAILABLE: &str = "teacher-unavailable";

const SEED_ATTEMPTS: usize = 2;

pub fn span_ref(span: &BookSpan) -> String {
    format!("{}#{}", span.book_id, span.ordinal)
}

fn seed_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?ims)^[ \t*#]*(?:question|问题)[ \t*]*[:：](.*?)^[ \t*#]*(?:answer|答案)[ \t*]*[:：](.*)\z")
            .expect("static pattern")
    })
}

/// `Question: ... Answer: ...`, both parts non-empty.
pub fn parse_seed_qa(text: &str) -> Option<(String, String)> {
    let caps = seed_re().captures(text)?;
    let q = caps[1].trim().trim_matches('*').trim();
    let a = caps[2].trim().trim_matches('*').trim();
    (!q.is_empty() && !a.is_empty()).then(|| (q.to_string(), a.to_string()))
}

/// `Ok(None)` when neither attempt produced a parseable reply.
pub fn generate_seed_qa(span: &BookSpan, gw: &Gateway, spec: &ModelSpec) -> Result<Option<(String, String)>, GatewayError> {
    let mut messages = vec![Message::user(render(SEED_PROMPT, &[("span", span.text.as_str())]))];
    for attempt in 1..=SEED_ATTEMPTS {
        let reply = gw.complete(&gw.request(spec, messages.clone()))?.text;
        if let Some(qa) = parse_seed_qa(&reply) {
            return Ok(Some(qa));
        }
        log::debug!("{}: seed reply {attempt} unparseable", span_ref(span));
        messages.push(Message::assistant(reply));
        messages.push(Message::user("Please reply again using exactly the Question:/Answer: format."));
    }
    log::warn!("{}: skipped, no usable seed question", span_ref(span));
    Ok(None)
}

/// Context blocks embedded in the retrieval-augmented prompt.
pub fn rag_context<'a>(question: &str, index: &'a RetrievalIndex, k: usize) -> Vec<&'a BookSpan> {
    index.retrieve(question, k).into_iter().map(|h| &index.spans()[h.doc]).collect()
}

pub fn rag_prompt(question: &str, context: &[&BookSpan]) -> String {
    let blocks: String = context
        .iter()
        .enumerate()
        .map(|(i, s)| format!("[Context {}]\n{}\n\n", i + 1, s.text.trim()))
        .collect();
    render(RAG_PROMPT, &[("context", blocks.as_str()), ("question", question)])
}

pub fn plain_prompt(question: &str) -> String {
    render(PLAIN_PROMPT, &[("question", question)])
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudentAnswers {
    pub rag: Option<String>,
    pub plain: Option<String>,
    /// Span refs given to the retrieval-augmented student.
    pub context: Vec<String>,
}

fn answer_or_none(gw: &Gateway, spec: &ModelSpec, prompt: String, who: &str) -> Option<String> {
    match gw.ask(spec, None, prompt) {
        Ok(text) if !text.trim().is_empty() => Some(text.trim().to_string()),
        Ok(_) => {
            log::warn!("{who} student returned an empty answer");
            None
        }
        Err(e) => {
            log::warn!("{who} student failed: {e}");
            None
        }
    }
}

/// Asks both students. A failing student leaves its answer absent without
/// affecting the other.
pub fn answer_students(question: &str, index: &RetrievalIndex, k: usize, gw: &Gateway, spec: &ModelSpec) -> StudentAnswers {
    let context = rag_context(question, index, k);
    let refs = context.iter().map(|s| span_ref(s)).collect();
    StudentAnswers {
        rag: answer_or_none(gw, spec, rag_prompt(question, &context), "rag"),
        plain: answer_or_none(gw, spec, plain_prompt(question), "plain"),
        context: refs,
    }
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t*#]*(?:choice|选择)[ \t*]*[:：][ \t*]*(?:answer[ \t]+)?(rag|plain)\b").expect("static pattern")
    })
}

fn rationale_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?ims)^[ \t*#]*(?:rationale|理由)[ \t*]*[:：](.*)\z").expect("static pattern"))
}

/// The teacher's pick and its stated reason (or the whole reply when no
/// rationale line is given).
pub fn parse_verdict(text: &str) -> Option<(StudentChoice, String)> {
    let caps = verdict_re().captures(text)?;
    let choice = if caps[1].eq_ignore_ascii_case("rag") { StudentChoice::Rag } else { StudentChoice::Plain };
    let rationale = match rationale_re().captures(text) {
        Some(r) => r[1].trim().to_string(),
        None => text.trim().to_string(),
    };
    Some((choice, rationale))
}

#[derive(Debug, Error)]
pub enum AdjudicateError {
    #[error("{id}: expected an answered item, found {status:?}")]
    NotAnswered { id: String, status: KnowledgeStatus },
    #[error("{id}: both student answers are required")]
    MissingAnswer { id: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Lets the teacher choose between the two student answers. An
/// unparseable verdict leaves the item `Answered` and flagged.
pub fn adjudicate(mut item: KnowledgeItem, gw: &Gateway, spec: &ModelSpec) -> Result<KnowledgeItem, AdjudicateError> {
    if item.status != KnowledgeStatus::Answered {
        return Err(AdjudicateError::NotAnswered { id: item.id, status: item.status });
    }
    let (Some(rag), Some(plain)) = (item.rag_answer.as_deref(), item.plain_answer.as_deref()) else {
        return Err(AdjudicateError::MissingAnswer { id: item.id });
    };
    let prompt = render(
        TEACHER_PROMPT,
        &[("question", item.question.as_str()), ("rag_answer", rag), ("plain_answer", plain)],
    );
    let reply = gw.ask(spec, None, prompt)?;
    match parse_verdict(&reply) {
        Some((choice, rationale)) => {
            item.teacher_choice = Some(choice);
            item.teacher_rationale = Some(rationale);
            item.status = KnowledgeStatus::Adjudicated;
        }
        None => {
            log::warn!("{}: teacher verdict unparseable", item.id);
            item.add_flag(FLAG_VERDICT_UNPARSED);
        }
    }
    Ok(item)
}

/// Receives adjudicated items for manual validation. Returns whether the
/// item was newly queued; repeats must be no-ops.
pub trait KnowledgeSink: Sync {
    fn enqueue_knowledge(&self, item: &KnowledgeItem) -> Result<bool, String>;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnqueueError {
    #[error("{id}: only adjudicated items can be queued, found {status:?}")]
    NotAdjudicated { id: String, status: KnowledgeStatus },
    #[error("review store: {0}")]
    Store(String),
}

/// Queues every item, or none if any fails the precondition. Returns the
/// number newly queued.
pub fn enqueue_for_review(items: &[KnowledgeItem], sink: &dyn KnowledgeSink) -> Result<usize, EnqueueError> {
    if let Some(bad) = items.iter().find(|i| i.status != KnowledgeStatus::Adjudicated) {
        return Err(EnqueueError::NotAdjudicated { id: bad.id.clone(), status: bad.status });
    }
    let mut queued = 0;
    for item in items {
        if sink.enqueue_knowledge(item).map_err(EnqueueError::Store)? {
            queued += 1;
        }
    }
    Ok(queued)
}
