//! Role-labeled transcript text <-> turns.

use crate::model::{Role, Turn};
use regex::Regex;
use thiserror::Error;

pub const SEEKER_MARKER: &str = "User";
pub const COUNSELOR_MARKER: &str = "Psychological assistant";

const SEEKER_SYNONYMS: &[&str] = &["User", "Seeker", "Visitor", "Client", "Patient", "来访者", "求助者", "用户"];
const COUNSELOR_SYNONYMS: &[&str] = &[
    "Psychological assistant",
    "Psychologist",
    "Counselor",
    "Counsellor",
    "Assistant",
    "Doctor",
    "心理咨询师",
    "咨询师",
    "心理助手",
    "心理医生",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("no role markers found")]
    NoMarkers,
    #[error("no seeker turn found")]
    NoSeeker,
}

/// Role markers recognized at the start of a line.
#[derive(Debug, Clone)]
pub struct Markers {
    re: Regex,
    seeker: Vec<String>,
}

impl Default for Markers {
    fn default() -> Self {
        Self::new(&[], &[])
    }
}

impl Markers {
    /// Built-in synonyms plus `extra_seeker` / `extra_counselor`.
    pub fn new(extra_seeker: &[String], extra_counselor: &[String]) -> Self {
        let seeker: Vec<String> =
            SEEKER_SYNONYMS.iter().map(|s| s.to_string()).chain(extra_seeker.iter().cloned()).collect();
        let counselor: Vec<String> =
            COUNSELOR_SYNONYMS.iter().map(|s| s.to_string()).chain(extra_counselor.iter().cloned()).collect();
        let mut all: Vec<&String> = seeker.iter().chain(counselor.iter()).collect();
        // Longest first so "Psychological assistant" beats "Assistant".
        all.sort_by_key(|s| std::cmp::Reverse(s.chars().count()));
        let alts: Vec<String> = all.iter().map(|s| regex::escape(s)).collect();
        let pattern = format!(r"(?im)^[ \t]*(?:\*\*|#+[ \t]*)?({})(?:\*\*)?[ \t]*[:：](?:\*\*)?[ \t]*", alts.join("|"));
        let re = Regex::new(&pattern).expect("marker pattern is escaped");
        Self { re, seeker: seeker.into_iter().map(|s| s.to_lowercase()).collect() }
    }

    fn role_of(&self, marker: &str) -> Role {
        if self.seeker.contains(&marker.to_lowercase()) {
            Role::Seeker
        } else {
            Role::Counselor
        }
    }
}

/// Splits on role markers, merging consecutive same-role blocks. Text
/// before the first marker and counselor turns before the first seeker turn
/// are dropped; empty turns are skipped.
pub fn parse_transcript(text: &str, markers: &Markers) -> Result<Vec<Turn>, TranscriptError> {
    let found: Vec<(usize, usize, Role)> = markers
        .re
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("group 0");
            (whole.start(), whole.end(), markers.role_of(&c[1]))
        })
        .collect();
    if found.is_empty() {
        return Err(TranscriptError::NoMarkers);
    }
    let mut turns: Vec<Turn> = Vec::new();
    for (i, (_, body_start, role)) in found.iter().enumerate() {
        let body_end = found.get(i + 1).map_or(text.len(), |n| n.0);
        let body = text[*body_start..body_end].trim();
        if body.is_empty() || (turns.is_empty() && *role == Role::Counselor) {
            continue;
        }
        match turns.last_mut() {
            Some(last) if last.role == *role => {
                last.text.push('\n');
                last.text.push_str(body);
            }
            _ => turns.push(Turn { role: *role, text: body.to_string(), evidence: None }),
        }
    }
    if turns.is_empty() {
        return Err(TranscriptError::NoSeeker);
    }
    Ok(turns)
}

pub fn render_transcript(turns: &[Turn]) -> String {
    let lines: Vec<String> = turns
        .iter()
        .map(|t| {
            let marker = match t.role {
                Role::Seeker => SEEKER_MARKER,
                Role::Counselor => COUNSELOR_MARKER,
            };
            format!("{marker}: {}", t.text)
        })
        .collect();
    lines.join("\n")
}
