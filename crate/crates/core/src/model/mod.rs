//! Shared domain types for every stage of the corpus and evaluation pipeline.
//!
//! All values are plain data: immutable once built, `Send + Sync`, and
//! serialized with stable snake_case tags so on-disk files survive refactors.

mod jsonl;
mod topics;
mod validate;

pub use jsonl::{read_jsonl, read_jsonl_numbered, write_jsonl, JsonlError, JsonlRead, LineDiagnostic, SchemaHeader};
pub use topics::{Topic, TopicManifest, TopicManifestError};
pub use validate::{book_span_violations, evidence_grounding_violations, Validate, Violation};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// A raw question thread exported from a help-seeking platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub answers: Vec<RawAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_hint: Option<String>,
}

impl RawRecord {
    /// Title and description joined into the question text of a pair.
    pub fn question_text(&self) -> String {
        join_question(&self.title, &self.description)
    }
}

pub(crate) fn join_question(title: &str, description: &str) -> String {
    let title = title.trim();
    let description = description.trim();
    match (title.is_empty(), description.is_empty()) {
        (_, true) => title.to_string(),
        (true, false) => description.to_string(),
        (false, false) => format!("{title}\n{description}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponderLevel {
    Certified,
    Experienced,
    Individual,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawAnswer {
    pub text: String,
    #[serde(default)]
    pub like_count: u64,
    #[serde(default = "unknown_level")]
    pub responder_level: ResponderLevel,
}

fn unknown_level() -> ResponderLevel {
    ResponderLevel::Unknown
}

/// One cleaned question/answer pair. One pair per surviving answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub like_count: u64,
    pub responder_level: ResponderLevel,
    #[serde(default)]
    pub topic: Topic,
    /// Source id chain, outermost first: `[record id, answer index]`.
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl QaPair {
    /// Character length of the entry as counted by the cleaning rules.
    pub fn char_len(&self) -> usize {
        self.question.chars().count() + self.answer.chars().count()
    }

    /// Re-express this pair as a raw record, e.g. to run it through cleaning again.
    pub fn to_raw(&self) -> RawRecord {
        RawRecord {
            id: self.id.clone(),
            title: self.question.clone(),
            description: String::new(),
            answers: vec![RawAnswer {
                text: self.answer.clone(),
                like_count: self.like_count,
                responder_level: self.responder_level,
            }],
            topic_hint: self.topic.label().map(str::to_string),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Seeker,
    Counselor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<EvidenceLabel>,
}

impl Turn {
    pub fn seeker(text: impl Into<String>) -> Self {
        Self { role: Role::Seeker, text: text.into(), evidence: None }
    }

    pub fn counselor(text: impl Into<String>) -> Self {
        Self { role: Role::Counselor, text: text.into(), evidence: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    VisitorDescription,
    DoctorReply,
    NoSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLabel {
    pub source: EvidenceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_span: Option<String>,
}

impl EvidenceLabel {
    pub fn none() -> Self {
        Self { source: EvidenceSource::NoSource, supporting_span: None }
    }

    pub fn is_supported(&self) -> bool {
        self.source != EvidenceSource::NoSource
    }
}

/// Reviewer-facing quality scores, each on a 1-5 ordinal scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityScores {
    pub empathy: u8,
    pub supportiveness: u8,
    pub guidance: u8,
    pub safety: u8,
}

impl QualityScores {
    pub fn as_array(&self) -> [u8; 4] {
        [self.empathy, self.supportiveness, self.guidance, self.safety]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueStage {
    Generated,
    EvidenceJudged,
    Integrated,
    Refined,
    Approved,
    Rejected,
}

impl DialogueStage {
    pub fn is_terminal(self) -> bool {
        matches!(self, DialogueStage::Approved | DialogueStage::Rejected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry<S> {
    pub stage: S,
    pub at: DateTime<Utc>,
    pub actor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub source_qa_id: String,
    pub turns: Vec<Turn>,
    pub stage: DialogueStage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityScores>,
    #[serde(default)]
    pub audit: Vec<AuditEntry<DialogueStage>>,
    /// Reviewer hints such as `low-evidence` or `safety-floor`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
}

impl Dialogue {
    pub fn counselor_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.role == Role::Counselor)
    }

    /// Supported counselor turns over all counselor turns, from the stored labels.
    pub fn recompute_support_ratio(&self) -> f64 {
        let (supported, total) = self.counselor_turns().fold((0usize, 0usize), |(s, n), t| {
            let ok = t.evidence.as_ref().is_some_and(EvidenceLabel::is_supported);
            (s + usize::from(ok), n + 1)
        });
        if total == 0 {
            0.0
        } else {
            supported as f64 / total as f64
        }
    }

    pub fn add_flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    /// Moves to `stage` and records who did it.
    pub fn advance(&mut self, stage: DialogueStage, at: DateTime<Utc>, actor: &str) {
        self.stage = stage;
        self.audit.push(AuditEntry { stage, at, actor: actor.to_string() });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookSpan {
    pub book_id: String,
    pub ordinal: usize,
    /// Half-open range in Unicode scalar values.
    pub char_range: (usize, usize),
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentChoice {
    Rag,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeStatus {
    Drafted,
    Answered,
    Adjudicated,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeItem {
    pub id: String,
    /// `"{book_id}#{ordinal}"` of the span the question was drawn from.
    pub span_ref: String,
    pub question: String,
    pub seed_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rag_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plain_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_choice: Option<StudentChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_rationale: Option<String>,
    pub status: KnowledgeStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl KnowledgeItem {
    /// The chosen student's answer once adjudicated.
    pub fn canonical_answer(&self) -> Option<&str> {
        match self.teacher_choice? {
            StudentChoice::Rag => self.rag_answer.as_deref(),
            StudentChoice::Plain => self.plain_answer.as_deref(),
        }
    }

    pub fn add_flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchKind {
    #[serde(rename = "smcq")]
    Smcq,
    #[serde(rename = "mmcq")]
    Mmcq,
    #[serde(rename = "case_qa")]
    CaseQa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Ethics,
    Theory,
    Case,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Ethics, Section::Theory, Section::Case];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Level2,
    Level3,
    Other,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Level2, Level::Level3, Level::Other];
}

/// Gold answer of a benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correct {
    Choices(BTreeSet<char>),
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchItem {
    pub id: String,
    pub kind: BenchKind,
    pub section: Section,
    pub level: Level,
    pub stem: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_background: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<char, String>,
    pub correct: Correct,
}

impl BenchItem {
    pub fn correct_choices(&self) -> Option<&BTreeSet<char>> {
        match &self.correct {
            Correct::Choices(c) => Some(c),
            Correct::Reference(_) => None,
        }
    }

    pub fn reference(&self) -> Option<&str> {
        match &self.correct {
            Correct::Reference(r) => Some(r),
            Correct::Choices(_) => None,
        }
    }
}

/// What was read out of a model reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extracted {
    Choices(BTreeSet<char>),
    Text(String),
    Unanswered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextScores {
    pub r1: f64,
    pub rl: f64,
    pub b4: f64,
    /// Absent when the embedding provider failed for this pair.
    pub bertscore: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub item_id: String,
    pub kind: BenchKind,
    pub section: Section,
    pub level: Level,
    pub raw_output: String,
    pub extracted: Extracted,
    pub standard_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elastic_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_scores: Option<TextScores>,
}
