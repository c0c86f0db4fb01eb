//! The four model-backed steps applied to one dialogue.

use super::evidence::{ground_label, parse_evidence_report, EvidenceReport};
use super::prompts::render;
use super::transcript::{parse_transcript, render_transcript};
use super::PipelineConfig;
use crate::clock::Clock;
use crate::gateway::{FinishReason, Gateway, GatewayError, Message};
use crate::model::{Dialogue, DialogueStage, EvidenceLabel, QaPair, QualityScores, Role, Turn};
use regex::Regex;
use std::sync::OnceLock;

pub const ACTOR: &str = "dialogue-forge";

pub const FLAG_LOW_EVIDENCE: &str = "low-evidence";
pub const FLAG_SAFETY_FLOOR: &str = "safety-floor";
pub const FLAG_SCORES_MISSING: &str = "scores-missing";
pub const FLAG_EVIDENCE_UNPARSED: &str = "evidence-unparsed";
pub const REJECT_GENERATION_PARSE: &str = "generation-parse";

/// Number of extra attempts after an unusable reply.
const REPAIR_ATTEMPTS: usize = 2;

/// Sends `prompt`; when `parse` rejects the reply, asks again in the same
/// conversation, up to [`REPAIR_ATTEMPTS`] times. `Ok(None)` means every
/// reply was unusable.
fn ask_parsed<T>(
    gw: &Gateway,
    cfg: &PipelineConfig,
    prompt: String,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, GatewayError> {
    let mut messages = vec![Message::user(prompt)];
    for attempt in 0..=REPAIR_ATTEMPTS {
        let resp = gw.complete(&gw.request(&cfg.model, messages.clone()))?;
        if resp.finish_reason == FinishReason::Error {
            return Err(GatewayError::Fatal("provider reported an error finish".into()));
        }
        match parse(&resp.text) {
            Ok(v) => return Ok(Some(v)),
            Err(why) => {
                log::debug!("attempt {}: unusable reply: {why}", attempt + 1);
                messages.push(Message::assistant(resp.text));
                messages.push(Message::user(format!(
                    "That reply could not be used ({why}). Please answer again, following the required output format exactly."
                )));
            }
        }
    }
    Ok(None)
}

fn same_shape(a: &[Turn], b: &[Turn]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.role == y.role)
}

/// Replaces turn texts, keeping roles and any evidence labels in place.
fn apply_revision(d: &mut Dialogue, revised: Vec<Turn>) {
    for (t, r) in d.turns.iter_mut().zip(revised) {
        t.text = r.text;
    }
}

pub fn new_dialogue(qa: &QaPair) -> Dialogue {
    Dialogue {
        id: format!("dlg-{}", qa.id),
        source_qa_id: qa.id.clone(),
        turns: Vec::new(),
        stage: DialogueStage::Generated,
        support_ratio: None,
        quality: None,
        audit: Vec::new(),
        flags: Vec::new(),
        reject_reason: None,
    }
}

/// Step 1. On repeated parse failure the dialogue comes back `Rejected`.
pub fn generate_dialogue(qa: &QaPair, gw: &Gateway, cfg: &PipelineConfig, clock: &dyn Clock) -> Result<Dialogue, GatewayError> {
    let min_turns = cfg.min_turns.to_string();
    let prompt = render(
        &cfg.prompts.generate,
        &[("question", qa.question.as_str()), ("answer", qa.answer.as_str()), ("min_turns", &min_turns)],
    );
    let markers = cfg.markers();
    let parsed = ask_parsed(gw, cfg, prompt, |text| {
        let turns = parse_transcript(text, &markers).map_err(|e| e.to_string())?;
        if turns.len() < cfg.min_turns {
            return Err(format!("{} turns, need at least {}", turns.len(), cfg.min_turns));
        }
        Ok(turns)
    })?;
    let mut d = new_dialogue(qa);
    match parsed {
        Some(turns) => {
            d.turns = turns;
            d.advance(DialogueStage::Generated, clock.now(), ACTOR);
        }
        None => {
            log::warn!("{}: no usable transcript after {} attempts", qa.id, REPAIR_ATTEMPTS + 1);
            d.reject_reason = Some(REJECT_GENERATION_PARSE.to_string());
            d.advance(DialogueStage::Rejected, clock.now(), ACTOR);
        }
    }
    Ok(d)
}

/// Labels every counselor turn and stores the ratio, without moving the stage.
fn label_turns(d: &mut Dialogue, qa: &QaPair, gw: &Gateway, cfg: &PipelineConfig) -> Result<EvidenceReport, GatewayError> {
    let n = d.counselor_turns().count();
    let n_str = n.to_string();
    let dialogue = render_transcript(&d.turns);
    let prompt = render(
        &cfg.prompts.evidence,
        &[
            ("question", qa.question.as_str()),
            ("answer", qa.answer.as_str()),
            ("dialogue", dialogue.as_str()),
            ("n_responses", n_str.as_str()),
        ],
    );
    let labels = match ask_parsed(gw, cfg, prompt, |text| parse_evidence_report(text, n).map_err(|e| e.to_string()))? {
        Some(labels) => labels.into_iter().map(|l| ground_label(l, qa)).collect(),
        None => {
            log::warn!("{}: evidence reply unusable; labeling every turn unsupported", d.id);
            d.add_flag(FLAG_EVIDENCE_UNPARSED);
            vec![EvidenceLabel::none(); n]
        }
    };
    let report = EvidenceReport::from_labels(labels);
    let mut it = report.labels.iter();
    for t in d.turns.iter_mut().filter(|t| t.role == Role::Counselor) {
        t.evidence = it.next().cloned();
    }
    d.support_ratio = Some(report.support_ratio);
    Ok(report)
}

/// Step 2.
pub fn judge_evidence(
    mut d: Dialogue,
    qa: &QaPair,
    gw: &Gateway,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<(Dialogue, EvidenceReport), GatewayError> {
    let report = label_turns(&mut d, qa, gw, cfg)?;
    d.advance(DialogueStage::EvidenceJudged, clock.now(), ACTOR);
    Ok((d, report))
}

fn labeled_transcript(d: &Dialogue) -> String {
    let marked: Vec<Turn> = d
        .turns
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.role == Role::Counselor && !t.evidence.as_ref().is_some_and(EvidenceLabel::is_supported) {
                t.text = format!("[unsupported] {}", t.text);
            }
            t
        })
        .collect();
    render_transcript(&marked)
}

/// Step 2b: rewrite under-grounded turns and re-judge, while the ratio
/// stays under the threshold. Returns the number of rounds run.
pub fn integrate_evidence(
    mut d: Dialogue,
    qa: &QaPair,
    gw: &Gateway,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<(Dialogue, u32), GatewayError> {
    let markers = cfg.markers();
    let mut rounds = 0;
    while d.support_ratio.unwrap_or(0.0) < cfg.support_threshold && rounds < cfg.max_integration_rounds {
        let labeled = labeled_transcript(&d);
        let prompt = render(
            &cfg.prompts.integrate,
            &[("question", qa.question.as_str()), ("answer", qa.answer.as_str()), ("labeled_dialogue", labeled.as_str())],
        );
        let shape: Vec<Turn> = d.turns.clone();
        let revised = ask_parsed(gw, cfg, prompt, |text| {
            let turns = parse_transcript(text, &markers).map_err(|e| e.to_string())?;
            if !same_shape(&turns, &shape) {
                return Err(format!("{} turns returned, expected {}", turns.len(), shape.len()));
            }
            Ok(turns)
        })?;
        match revised {
            Some(mut turns) => {
                for t in &mut turns {
                    if let Some(rest) = t.text.strip_prefix("[unsupported]") {
                        t.text = rest.trim_start().to_string();
                    }
                }
                apply_revision(&mut d, turns);
            }
            None => log::warn!("{}: integration reply unusable; keeping turns", d.id),
        }
        label_turns(&mut d, qa, gw, cfg)?;
        rounds += 1;
    }
    if d.support_ratio.unwrap_or(0.0) < cfg.support_threshold {
        d.add_flag(FLAG_LOW_EVIDENCE);
    }
    d.advance(DialogueStage::Integrated, clock.now(), ACTOR);
    Ok((d, rounds))
}

fn score_re(names: &str) -> Regex {
    Regex::new(&format!(r"(?im)^[ \t]*(?:[-*][ \t]*|\d+[.)、][ \t]*)?(?:\*\*)?(?:{names})(?:\*\*)?[ \t]*[:：][ \t]*(?:\*\*)?[ \t]*([1-5])\b"))
        .expect("static pattern")
}

fn score_patterns() -> &'static [Regex; 4] {
    static RE: OnceLock<[Regex; 4]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            score_re("empathy|共情"),
            score_re("supportiveness|supportive|support|支持性|支持"),
            score_re("guidance|guiding|引导性|引导"),
            score_re("safety|安全性|安全"),
        ]
    })
}

fn scores_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[ \t]*(?:\*\*|#+[ \t]*)?(?:scores|评分)(?:\*\*)?[ \t]*[:：]?").expect("static pattern"))
}

/// Splits a refinement reply into its transcript part and its scores.
pub fn parse_refine_reply(text: &str) -> (Option<Vec<Turn>>, Option<QualityScores>, &str) {
    let (body, tail) = match scores_header().find(text) {
        Some(m) => (&text[..m.start()], &text[m.start()..]),
        None => (text, text),
    };
    let mut vals = [0u8; 4];
    let mut all = true;
    for (slot, re) in vals.iter_mut().zip(score_patterns()) {
        match re.captures_iter(tail).last().and_then(|c| c[1].parse::<u8>().ok()) {
            Some(v) => *slot = v,
            None => all = false,
        }
    }
    let scores = all.then(|| QualityScores { empathy: vals[0], supportiveness: vals[1], guidance: vals[2], safety: vals[3] });
    let turns = parse_transcript(body, &Default::default()).ok();
    (turns, scores, body)
}

/// Step 3: revise along the four axes and read back the scores.
pub fn refine_dialogue(mut d: Dialogue, gw: &Gateway, cfg: &PipelineConfig, clock: &dyn Clock) -> Result<Dialogue, GatewayError> {
    let dialogue = render_transcript(&d.turns);
    let prompt = render(&cfg.prompts.refine, &[("dialogue", dialogue.as_str())]);
    let resp = gw.complete(&gw.request(&cfg.model, vec![Message::user(prompt)]))?;
    if resp.finish_reason == FinishReason::Error {
        return Err(GatewayError::Fatal("provider reported an error finish".into()));
    }
    let (_, scores, body) = parse_refine_reply(&resp.text);
    match parse_transcript(body, &cfg.markers()) {
        Ok(turns) if same_shape(&turns, &d.turns) => apply_revision(&mut d, turns),
        Ok(turns) => log::warn!("{}: refinement changed the turn structure ({} turns); keeping original text", d.id, turns.len()),
        Err(_) => log::debug!("{}: refinement reply had no transcript; keeping original text", d.id),
    }
    match scores {
        Some(q) => {
            if q.safety <= 1 {
                d.add_flag(FLAG_SAFETY_FLOOR);
            }
            d.quality = Some(q);
        }
        None => {
            log::warn!("{}: refinement scores missing", d.id);
            d.add_flag(FLAG_SCORES_MISSING);
        }
    }
    d.advance(DialogueStage::Refined, clock.now(), ACTOR);
    Ok(d)
}
