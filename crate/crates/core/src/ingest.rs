//! Cleaning of raw platform QA exports and corpus statistics.

use crate::bench::tokenize::{count_tokens, TokenizerMode};
use crate::gateway::{Gateway, ModelSpec};
use crate::model::{
    read_jsonl_numbered, Dialogue, JsonlError, JsonlRead, LineDiagnostic, QaPair, RawRecord, ResponderLevel, Role,
    Topic, TopicManifest, Validate,
};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

pub const RAW_SCHEMA: &str = "raw_record";
pub const PAIR_SCHEMA: &str = "qa_pair";

/// Rule names as they appear in [`CleanReport::removed`], in application order.
pub const RULE_NO_ANSWER: &str = "no-answer";
pub const RULE_ADS: &str = "ads";
pub const RULE_SHORT: &str = "short";
pub const RULE_LOW_ENGAGEMENT: &str = "low-engagement";
pub const RULE_LEVEL: &str = "level";

/// Reads raw records; malformed or invalid lines become diagnostics.
pub fn parse_raw(path: &Path) -> Result<JsonlRead<RawRecord>, JsonlError> {
    let read = read_jsonl_numbered::<RawRecord>(path, RAW_SCHEMA)?;
    let mut diagnostics = read.diagnostics;
    let mut items = Vec::with_capacity(read.items.len());
    for (line, rec) in read.items {
        let v = rec.violations();
        if v.is_empty() {
            items.push(rec);
        } else {
            let msgs: Vec<String> = v.into_iter().map(|v| v.0).collect();
            diagnostics.push(LineDiagnostic { line, message: msgs.join("; ") });
        }
    }
    diagnostics.sort_by_key(|d| d.line);
    Ok(JsonlRead { items, diagnostics })
}

pub const DEFAULT_AD_PATTERNS: &[&str] = &[
    r"(?i)https?://",
    r"(?i)(加|\+)\s*(微信|vx|v信|qq)",
    r"微信号",
    r"扫码",
    r"(?i)qq群",
    r"优惠券|限时优惠|免费领取",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanPolicy {
    pub min_chars: usize,
    pub min_likes: u64,
    pub allowed_levels: BTreeSet<ResponderLevel>,
    /// Regular expressions; escape literal text with `\Q...\E` if needed.
    pub ad_patterns: Vec<String>,
}

impl Default for CleanPolicy {
    fn default() -> Self {
        Self {
            min_chars: 100,
            min_likes: 5,
            allowed_levels: [ResponderLevel::Certified, ResponderLevel::Experienced].into_iter().collect(),
            ad_patterns: DEFAULT_AD_PATTERNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("allowed_levels must not be empty")]
    NoLevels,
    #[error("ad pattern {pattern:?}: {source}")]
    Pattern { pattern: String, source: regex::Error },
}

/// A policy with its patterns compiled.
#[derive(Debug, Clone)]
pub struct Cleaner {
    policy: CleanPolicy,
    ads: Vec<Regex>,
}

impl CleanPolicy {
    pub fn compile(self) -> Result<Cleaner, PolicyError> {
        if self.allowed_levels.is_empty() {
            return Err(PolicyError::NoLevels);
        }
        let ads = self
            .ad_patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|source| PolicyError::Pattern { pattern: p.clone(), source }))
            .collect::<Result<_, _>>()?;
        Ok(Cleaner { policy: self, ads })
    }
}

/// Why one candidate entry was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub record_id: String,
    /// Absent when the record had no usable answer at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
    pub rule: String,
}

/// Accounting for one cleaning run. Units are candidate entries: one per
/// answer, or one per record that has no answers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub removed: BTreeMap<String, usize>,
    pub removals: Vec<Removal>,
}

impl CleanReport {
    pub fn is_balanced(&self) -> bool {
        self.input_count == self.kept_count + self.removed.values().sum::<usize>()
            && self.removals.len() == self.removed.values().sum::<usize>()
    }

    fn remove(&mut self, record_id: &str, answer_index: Option<usize>, rule: &'static str) {
        *self.removed.entry(rule.to_string()).or_insert(0) += 1;
        self.removals.push(Removal { record_id: record_id.to_string(), answer_index, rule: rule.to_string() });
    }
}

impl Cleaner {
    pub fn policy(&self) -> &CleanPolicy {
        &self.policy
    }

    /// First rule that rejects the entry, if any.
    pub fn verdict(&self, question: &str, answer: &str, likes: u64, level: ResponderLevel) -> Option<&'static str> {
        if answer.trim().is_empty() {
            return Some(RULE_NO_ANSWER);
        }
        if self.ads.iter().any(|re| re.is_match(question) || re.is_match(answer)) {
            return Some(RULE_ADS);
        }
        if question.chars().count() + answer.chars().count() < self.policy.min_chars {
            return Some(RULE_SHORT);
        }
        if likes < self.policy.min_likes {
            return Some(RULE_LOW_ENGAGEMENT);
        }
        if !self.policy.allowed_levels.contains(&level) {
            return Some(RULE_LEVEL);
        }
        None
    }

    /// One pair per surviving answer, ids `"{record}#{answer index}"`.
    pub fn clean(&self, records: &[RawRecord]) -> (Vec<QaPair>, CleanReport) {
        let mut report = CleanReport::default();
        let mut pairs = Vec::new();
        for rec in records {
            if rec.answers.is_empty() {
                report.input_count += 1;
                report.remove(&rec.id, None, RULE_NO_ANSWER);
                continue;
            }
            let question = rec.question_text();
            for (idx, ans) in rec.answers.iter().enumerate() {
                report.input_count += 1;
                let answer = ans.text.trim();
                if let Some(rule) = self.verdict(&question, answer, ans.like_count, ans.responder_level) {
                    report.remove(&rec.id, Some(idx), rule);
                    continue;
                }
                pairs.push(QaPair {
                    id: format!("{}#{idx}", rec.id),
                    question: question.clone(),
                    answer: answer.to_string(),
                    like_count: ans.like_count,
                    responder_level: ans.responder_level,
                    topic: rec.topic_hint.clone().map_or(Topic::Unlabeled, Topic::Label),
                    provenance: vec![rec.id.clone(), idx.to_string()],
                });
            }
        }
        report.kept_count = pairs.len();
        (pairs, report)
    }

    /// Re-applies the rules to already-built pairs, keeping ids intact.
    pub fn clean_pairs(&self, pairs: &[QaPair]) -> (Vec<QaPair>, CleanReport) {
        let mut report = CleanReport { input_count: pairs.len(), ..Default::default() };
        let mut kept = Vec::new();
        for p in pairs {
            match self.verdict(&p.question, &p.answer, p.like_count, p.responder_level) {
                Some(rule) => report.remove(&p.id, None, rule),
                None => kept.push(p.clone()),
            }
        }
        report.kept_count = kept.len();
        (kept, report)
    }
}

pub fn clean(records: &[RawRecord], policy: &CleanPolicy) -> Result<(Vec<QaPair>, CleanReport), PolicyError> {
    Ok(policy.clone().compile()?.clean(records))
}

/// Outcome counts of a topic labeling pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelSummary {
    pub labeled: usize,
    pub unparseable: usize,
    pub failed: usize,
}

pub fn topic_prompt(manifest: &TopicManifest, pair: &QaPair) -> String {
    let mut s = String::from("请判断下面这条心理咨询问答属于以下哪个主题，只回复主题名称：\n");
    for t in manifest.topics() {
        s.push_str("- ");
        s.push_str(t);
        s.push('\n');
    }
    s.push_str("\n问题：");
    s.push_str(&pair.question);
    s.push_str("\n回答：");
    s.push_str(&pair.answer);
    s
}

/// Asks the classifier for each pair's topic. Unparseable replies and
/// gateway failures leave the pair unlabeled.
pub fn label_topics(
    pairs: Vec<QaPair>,
    gateway: &Gateway,
    spec: &ModelSpec,
    manifest: &TopicManifest,
    jobs: usize,
) -> (Vec<QaPair>, LabelSummary) {
    let label = |mut pair: QaPair| -> (QaPair, u8) {
        let outcome = match gateway.ask(spec, None, topic_prompt(manifest, &pair)) {
            Ok(reply) => {
                pair.topic = manifest.resolve(&reply);
                if pair.topic.is_labeled() {
                    0
                } else {
                    log::warn!("{}: unrecognized topic reply {:?}", pair.id, reply.trim());
                    1
                }
            }
            Err(e) => {
                log::warn!("{}: topic labeling failed: {e}", pair.id);
                pair.topic = Topic::Unlabeled;
                2
            }
        };
        (pair, outcome)
    };
    let results: Vec<(QaPair, u8)> = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| pairs.into_par_iter().map(label).collect()),
        Err(_) => pairs.into_iter().map(label).collect(),
    };
    let mut summary = LabelSummary::default();
    let mut out = Vec::with_capacity(results.len());
    for (p, o) in results {
        match o {
            0 => summary.labeled += 1,
            1 => summary.unparseable += 1,
            _ => summary.failed += 1,
        }
        out.push(p);
    }
    (out, summary)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub dialogue_count: usize,
    pub avg_turns_per_dialogue: f64,
    pub avg_tokens_per_turn: f64,
    pub avg_seeker_tokens_per_turn: f64,
    pub avg_counselor_tokens_per_turn: f64,
    pub avg_tokens_per_question: f64,
    pub avg_tokens_per_answer: f64,
    /// Seeker/counselor adjacent pairs across all dialogues.
    pub context_response_pairs: usize,
    /// Fractions over labeled pairs only.
    pub topic_distribution: BTreeMap<String, f64>,
    pub empty: bool,
}

fn avg(total: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total as f64 / n as f64
    }
}

pub fn corpus_stats(pairs: &[QaPair], dialogues: &[Dialogue], mode: TokenizerMode) -> CorpusStats {
    let q_tokens: usize = pairs.iter().map(|p| count_tokens(&p.question, mode)).sum();
    let a_tokens: usize = pairs.iter().map(|p| count_tokens(&p.answer, mode)).sum();
    let mut turns = 0;
    let mut turn_tokens = 0;
    let (mut seeker_turns, mut seeker_tokens, mut counselor_turns, mut counselor_tokens) = (0, 0, 0, 0);
    let mut context_response_pairs = 0;
    for d in dialogues {
        turns += d.turns.len();
        for (i, t) in d.turns.iter().enumerate() {
            let n = count_tokens(&t.text, mode);
            turn_tokens += n;
            match t.role {
                Role::Seeker => {
                    seeker_turns += 1;
                    seeker_tokens += n;
                }
                Role::Counselor => {
                    counselor_turns += 1;
                    counselor_tokens += n;
                    if i > 0 && d.turns[i - 1].role == Role::Seeker {
                        context_response_pairs += 1;
                    }
                }
            }
        }
    }
    let mut topic_counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in pairs {
        if let Some(l) = p.topic.label() {
            *topic_counts.entry(l.to_string()).or_insert(0) += 1;
        }
    }
    let labeled: usize = topic_counts.values().sum();
    CorpusStats {
        pair_count: pairs.len(),
        dialogue_count: dialogues.len(),
        avg_turns_per_dialogue: avg(turns, dialogues.len()),
        avg_tokens_per_turn: avg(turn_tokens, turns),
        avg_seeker_tokens_per_turn: avg(seeker_tokens, seeker_turns),
        avg_counselor_tokens_per_turn: avg(counselor_tokens, counselor_turns),
        avg_tokens_per_question: avg(q_tokens, pairs.len()),
        avg_tokens_per_answer: avg(a_tokens, pairs.len()),
        context_response_pairs,
        topic_distribution: topic_counts.into_iter().map(|(k, v)| (k, v as f64 / labeled as f64)).collect(),
        empty: pairs.is_empty() && dialogues.is_empty(),
    }
}
