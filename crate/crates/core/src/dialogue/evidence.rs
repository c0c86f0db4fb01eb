//! Parsing of structured evidence-source replies.

use crate::model::{EvidenceLabel, EvidenceSource, QaPair};
use regex::Regex;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvidenceParseError {
    #[error("expected {expected} source entries, found {found}")]
    Count { expected: usize, found: usize },
    #[error("entry {index}: unrecognized source {text:?}")]
    UnknownSource { index: usize, text: String },
}

/// Per-counselor-turn labels and the supported fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceReport {
    pub labels: Vec<EvidenceLabel>,
    pub support_ratio: f64,
}

impl EvidenceReport {
    pub fn from_labels(labels: Vec<EvidenceLabel>) -> Self {
        let supported = labels.iter().filter(|l| l.is_supported()).count();
        let support_ratio = if labels.is_empty() { 0.0 } else { supported as f64 / labels.len() as f64 };
        Self { labels, support_ratio }
    }
}

const PHRASES: &[(&str, EvidenceSource)] = &[
    ("from visitor's self description", EvidenceSource::VisitorDescription),
    ("from visitor’s self description", EvidenceSource::VisitorDescription),
    ("visitor's self description", EvidenceSource::VisitorDescription),
    ("来访者自述", EvidenceSource::VisitorDescription),
    ("来自来访者的自我描述", EvidenceSource::VisitorDescription),
    ("from doctor's reply", EvidenceSource::DoctorReply),
    ("from doctor’s reply", EvidenceSource::DoctorReply),
    ("doctor's reply", EvidenceSource::DoctorReply),
    ("医生回复", EvidenceSource::DoctorReply),
    ("来自医生的回复", EvidenceSource::DoctorReply),
    ("no corresponding source", EvidenceSource::NoSource),
    ("无对应来源", EvidenceSource::NoSource),
    ("没有对应来源", EvidenceSource::NoSource),
];

fn source_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*(?:[-*][ \t]*|\d+[.)、][ \t]*)?(?:\*\*)?(?:source|来源|证据来源)(?:\*\*)?[ \t]*[:：][ \t]*(.*)$")
            .expect("static pattern")
    })
}

const OPEN: &[char] = &['<', '〈', '《', '[', '【', '"', '“', '「'];
const CLOSE: &[char] = &['>', '〉', '》', ']', '】', '"', '”', '」'];

fn strip_brackets(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix(OPEN).unwrap_or(s);
    let s = s.strip_suffix(CLOSE).unwrap_or(s);
    s.trim()
}

fn parse_entry(index: usize, rest: &str) -> Result<EvidenceLabel, EvidenceParseError> {
    let body = rest.trim().trim_start_matches(OPEN).trim_start();
    let lower = body.to_lowercase();
    let Some((phrase, source)) = PHRASES.iter().find(|(p, _)| lower.starts_with(p)) else {
        return Err(EvidenceParseError::UnknownSource { index, text: rest.trim().to_string() });
    };
    if *source == EvidenceSource::NoSource {
        return Ok(EvidenceLabel::none());
    }
    // Byte offsets line up because the phrases are already lowercase.
    let after = body.get(phrase.len()..).unwrap_or("").trim_start().trim_start_matches(CLOSE).trim_start();
    let quote = after.strip_prefix([':', '：']).map(strip_brackets).unwrap_or("");
    Ok(EvidenceLabel {
        source: *source,
        supporting_span: (!quote.is_empty()).then(|| quote.to_string()),
    })
}

/// Exactly `n` labels, in order of appearance.
pub fn parse_evidence_report(text: &str, n: usize) -> Result<Vec<EvidenceLabel>, EvidenceParseError> {
    let entries: Vec<&str> = source_line().captures_iter(text).map(|c| c.get(1).map_or("", |m| m.as_str())).collect();
    if entries.len() != n {
        return Err(EvidenceParseError::Count { expected: n, found: entries.len() });
    }
    entries.iter().enumerate().map(|(i, e)| parse_entry(i, e)).collect()
}

/// Checks a parsed label against the source pair. A quote that does not
/// occur in the question or answer, or a named source without a quote,
/// is downgraded to no source.
pub fn ground_label(label: EvidenceLabel, qa: &QaPair) -> EvidenceLabel {
    if !label.is_supported() {
        return EvidenceLabel::none();
    }
    let Some(span) = label.supporting_span.as_deref() else {
        return EvidenceLabel::none();
    };
    let candidates = [span.trim(), span.trim().trim_end_matches(['…', '.', '。']).trim()];
    for c in candidates {
        if !c.is_empty() && (qa.question.contains(c) || qa.answer.contains(c)) {
            return EvidenceLabel { source: label.source, supporting_span: Some(c.to_string()) };
        }
    }
    log::debug!("quote {span:?} not found in {}", qa.id);
    EvidenceLabel::none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResponderLevel, Topic};

    #[test]
    fn three_entries() {
        let text = "response in multi-turn dialogue:<a>\nSource:<From visitor's self description>:<睡不好>\n\
                    response in multi-turn dialogue:<b>\nSource:<No corresponding source>\n\
                    response in multi-turn dialogue:<c>\nSource:From doctor's reply:〈多运动〉";
        let labels = parse_evidence_report(text, 3).unwrap();
        assert_eq!(labels[0].source, EvidenceSource::VisitorDescription);
        assert_eq!(labels[0].supporting_span.as_deref(), Some("睡不好"));
        assert_eq!(labels[1], EvidenceLabel::none());
        assert_eq!(labels[2].source, EvidenceSource::DoctorReply);
        assert_eq!(labels[2].supporting_span.as_deref(), Some("多运动"));
    }

    #[test]
    fn count_mismatch() {
        let text = "Source:No corresponding source\nSource:No corresponding source";
        assert_eq!(parse_evidence_report(text, 3), Err(EvidenceParseError::Count { expected: 3, found: 2 }));
    }

    #[test]
    fn prose_is_tolerated() {
        let text = "Here is my analysis.\n\n1. **Source**: From doctor's reply: \"try journaling\"\nThanks!";
        let labels = parse_evidence_report(text, 1).unwrap();
        assert_eq!(labels[0].supporting_span.as_deref(), Some("try journaling"));
    }

    #[test]
    fn unknown_source_fails() {
        assert!(matches!(parse_evidence_report("Source: somewhere", 1), Err(EvidenceParseError::UnknownSource { .. })));
    }

    #[test]
    fn grounding() {
        let qa = QaPair {
            id: "q".into(),
            question: "我最近总是睡不好".into(),
            answer: "建议多运动，规律作息。".into(),
            like_count: 5,
            responder_level: ResponderLevel::Certified,
            topic: Topic::Unlabeled,
            provenance: vec![],
        };
        let ok = EvidenceLabel { source: EvidenceSource::DoctorReply, supporting_span: Some("规律作息。".into()) };
        assert_eq!(ground_label(ok.clone(), &qa).supporting_span.as_deref(), Some("规律作息。"));
        let fake = EvidenceLabel { source: EvidenceSource::DoctorReply, supporting_span: Some("吃药".into()) };
        assert_eq!(ground_label(fake, &qa), EvidenceLabel::none());
        let bare = EvidenceLabel { source: EvidenceSource::DoctorReply, supporting_span: None };
        assert_eq!(ground_label(bare, &qa), EvidenceLabel::none());
    }

    #[test]
    fn ratio_counts_supported() {
        let s = |src| EvidenceLabel { source: src, supporting_span: Some("x".into()) };
        let r = EvidenceReport::from_labels(vec![
            s(EvidenceSource::DoctorReply),
            s(EvidenceSource::VisitorDescription),
            EvidenceLabel::none(),
            s(EvidenceSource::DoctorReply),
        ]);
        assert_eq!(r.support_ratio, 0.75);
    }
}
