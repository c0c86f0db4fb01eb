use super::*;
use std::fmt;

/// One broken invariant, in human-readable form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<&str> for Violation {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Invariant checking. Pure and total: never panics, never fails.
pub trait Validate {
    fn violations(&self) -> Vec<Violation>;

    fn is_valid(&self) -> bool {
        self.violations().is_empty()
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(Violation(msg()));
        }
    }

    fn extend(&mut self, prefix: &str, inner: Vec<Violation>) {
        self.0.extend(inner.into_iter().map(|v| Violation(format!("{prefix}: {v}"))));
    }
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl Validate for RawRecord {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        c.check(!self.id.trim().is_empty(), || "id is empty".into());
        c.0
    }
}

impl Validate for QaPair {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        c.check(!self.id.trim().is_empty(), || "id is empty".into());
        c.check(!self.answer.trim().is_empty(), || "answer is empty".into());
        c.check(self.char_len() >= 100, || format!("entry has {} characters, fewer than 100", self.char_len()));
        c.0
    }
}

impl Validate for EvidenceLabel {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        let has_span = self.supporting_span.as_deref().is_some_and(|s| !s.is_empty());
        c.check(has_span == self.is_supported(), || {
            "supporting_span must be present exactly when a source is named".into()
        });
        c.0
    }
}

impl Validate for QualityScores {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        for (name, v) in ["empathy", "supportiveness", "guidance", "safety"].iter().zip(self.as_array()) {
            c.check((1..=5).contains(&v), || format!("{name} score {v} outside 1-5"));
        }
        c.0
    }
}

/// Legal single-step moves of a dialogue through the pipeline.
pub(crate) fn dialogue_transition_ok(from: Option<DialogueStage>, to: DialogueStage) -> bool {
    use DialogueStage::*;
    match (from, to) {
        (None, Generated) | (None, Rejected) => true,
        (Some(Generated), EvidenceJudged) => true,
        (Some(EvidenceJudged), Integrated | Refined) => true,
        (Some(Integrated), Refined) => true,
        (Some(Refined), Approved) => true,
        (Some(s), Rejected) => !s.is_terminal(),
        _ => false,
    }
}

impl Validate for Dialogue {
    fn violations(&self) -> Vec<Violation> {
        use DialogueStage::*;
        let mut c = Collector::new();
        let rejected = self.stage == Rejected;
        if !rejected {
            c.check(self.turns.len() >= 2, || "turns < 2".into());
            c.check(self.turns.first().is_none_or(|t| t.role == Role::Seeker), || {
                "first turn must be the seeker".into()
            });
            c.check(self.turns.windows(2).all(|w| w[0].role != w[1].role), || "turns must alternate roles".into());
        }
        let judged = self.stage >= EvidenceJudged;
        for (i, t) in self.turns.iter().enumerate() {
            if let Some(ev) = &t.evidence {
                c.check(t.role == Role::Counselor, || format!("turn {i}: evidence on a seeker turn"));
                c.check(judged, || format!("turn {i}: evidence before evidence judgment"));
                c.extend(&format!("turn {i}"), ev.violations());
            }
        }
        if !rejected {
            c.check(self.support_ratio.is_some() == judged, || {
                "support_ratio must be present exactly from evidence judgment on".into()
            });
            if let Some(q) = &self.quality {
                c.check(self.stage >= Refined, || "quality scores before refinement".into());
                c.extend("quality", q.violations());
            }
        }
        if let Some(r) = self.support_ratio {
            c.check(unit_interval(r), || format!("support_ratio {r} outside [0,1]"));
            let labeled = self.counselor_turns().any(|t| t.evidence.is_some());
            if labeled {
                let recomputed = self.recompute_support_ratio();
                c.check((recomputed - r).abs() < 1e-12, || {
                    format!("support_ratio {r} disagrees with labels ({recomputed})")
                });
            }
        }
        let mut prev: Option<&AuditEntry<DialogueStage>> = None;
        for entry in &self.audit {
            c.check(dialogue_transition_ok(prev.map(|p| p.stage), entry.stage), || {
                format!("audit: illegal transition {:?} -> {:?}", prev.map(|p| p.stage), entry.stage)
            });
            if let Some(p) = prev {
                c.check(entry.at >= p.at, || "audit: timestamps go backwards".into());
            }
            prev = Some(entry);
        }
        if let Some(last) = prev {
            c.check(last.stage == self.stage, || "audit does not end at the current stage".into());
        }
        c.0
    }
}

/// Checks that every quoted supporting span occurs verbatim in the source pair.
pub fn evidence_grounding_violations(d: &Dialogue, qa: &QaPair) -> Vec<Violation> {
    let mut c = Collector::new();
    for (i, t) in d.turns.iter().enumerate() {
        if let Some(span) = t.evidence.as_ref().and_then(|e| e.supporting_span.as_deref()) {
            c.check(qa.question.contains(span) || qa.answer.contains(span), || {
                format!("turn {i}: supporting span not found in source pair")
            });
        }
    }
    c.0
}

impl Validate for BookSpan {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        let (start, end) = self.char_range;
        c.check(start < end, || "empty span".into());
        c.check(self.text.chars().count() == end.saturating_sub(start), || {
            "char_range length does not match text".into()
        });
        c.0
    }
}

/// Spans of one book must tile its text exactly.
pub fn book_span_violations(text: &str, spans: &[BookSpan]) -> Vec<Violation> {
    let mut c = Collector::new();
    let mut cursor = 0usize;
    for (i, s) in spans.iter().enumerate() {
        c.extend(&format!("span {i}"), s.violations());
        c.check(s.ordinal == i, || format!("span {i}: ordinal {}", s.ordinal));
        c.check(s.char_range.0 == cursor, || format!("span {i}: gap or overlap at {cursor}"));
        cursor = s.char_range.1;
    }
    let joined: String = spans.iter().map(|s| s.text.as_str()).collect();
    c.check(joined == text, || "concatenated spans differ from the book text".into());
    c.0
}

impl Validate for KnowledgeItem {
    fn violations(&self) -> Vec<Violation> {
        use KnowledgeStatus::*;
        let mut c = Collector::new();
        c.check(!self.question.trim().is_empty(), || "question is empty".into());
        c.check(!self.seed_answer.trim().is_empty(), || "seed_answer is empty".into());
        if self.status != Rejected {
            if self.status >= Answered {
                c.check(self.rag_answer.is_some() && self.plain_answer.is_some(), || {
                    "answered items need both student answers".into()
                });
            }
            let adjudicated = self.status >= Adjudicated;
            c.check(self.teacher_choice.is_some() == adjudicated, || {
                "teacher_choice must be present exactly from adjudication on".into()
            });
            if adjudicated {
                c.check(self.canonical_answer().is_some(), || "chosen student answer is missing".into());
            }
        }
        c.0
    }
}

impl Validate for BenchItem {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        c.check(!self.id.trim().is_empty(), || "id is empty".into());
        c.check(!self.stem.trim().is_empty(), || "stem is empty".into());
        match self.kind {
            BenchKind::Smcq | BenchKind::Mmcq => {
                let n = self.options.len();
                c.check((2..=6).contains(&n), || format!("{n} options, expected 2-6"));
                c.check(self.options.keys().all(|k| k.is_ascii_uppercase()), || {
                    "option letters must be A-Z".into()
                });
                match &self.correct {
                    Correct::Reference(_) => c.check(false, || "MCQ needs a set of correct letters".into()),
                    Correct::Choices(set) => {
                        if self.kind == BenchKind::Smcq {
                            c.check(set.len() == 1, || "SMCQ must have exactly one correct option".into());
                        } else {
                            c.check(set.len() >= 2 && set.len() <= n, || {
                                format!("MMCQ must have 2..={n} correct options, has {}", set.len())
                            });
                        }
                        c.check(set.iter().all(|l| self.options.contains_key(l)), || {
                            "correct letters must be option letters".into()
                        });
                    }
                }
            }
            BenchKind::CaseQa => {
                c.check(self.section == Section::Case, || "case QA must belong to the case section".into());
                c.check(self.options.is_empty(), || "case QA has no options".into());
                c.check(self.reference().is_some_and(|r| !r.trim().is_empty()), || {
                    "case QA needs a non-empty reference answer".into()
                });
            }
        }
        c.0
    }
}

impl Validate for EvalOutcome {
    fn violations(&self) -> Vec<Violation> {
        let mut c = Collector::new();
        c.check(self.standard_score == 0.0 || self.standard_score == 1.0, || {
            "standard_score must be 0 or 1".into()
        });
        match self.kind {
            BenchKind::Mmcq => match self.elastic_score {
                Some(e) => {
                    c.check(unit_interval(e), || format!("elastic_score {e} outside [0,1]"));
                    c.check(e >= self.standard_score, || "elastic_score below standard_score".into());
                }
                None => c.check(false, || "MMCQ outcome needs an elastic_score".into()),
            },
            _ => c.check(self.elastic_score.is_none(), || "elastic_score is MMCQ-only".into()),
        }
        let is_case = self.kind == BenchKind::CaseQa;
        c.check(self.text_scores.is_some() == is_case, || "text_scores present exactly for case QA".into());
        if let Some(ts) = &self.text_scores {
            let vals = [Some(ts.r1), Some(ts.rl), Some(ts.b4), ts.bertscore];
            c.check(vals.iter().flatten().all(|v| unit_interval(*v)), || "text score outside [0,1]".into());
        }
        c.0
    }
}
