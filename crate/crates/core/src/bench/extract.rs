//! Reading the chosen option letters out of a free-form model reply.

use crate::model::{BenchItem, BenchKind, Extracted};
use regex::Regex;
use std::collections::BTreeSet;

pub const DEFAULT_PATTERNS: &[&str] = &[
    r"答案",
    r"(?i)\banswers?\b",
    r"正确选项",
    r"(?:应|故|应当|因此|所以|我)选(?:择)?",
    r"选择",
];

/// Longest stretch of filler allowed between a keyword and its first letter.
const MAX_FILLER: usize = 16;

#[derive(Debug, Clone)]
pub struct Extractor {
    patterns: Vec<Regex>,
    trailing_run: bool,
}

impl Default for Extractor {
    fn default() -> Self {
        Self::new(DEFAULT_PATTERNS.iter().copied()).expect("default patterns compile")
    }
}

impl Extractor {
    pub fn new<'a>(patterns: impl IntoIterator<Item = &'a str>) -> Result<Self, regex::Error> {
        let patterns = patterns.into_iter().map(Regex::new).collect::<Result<_, _>>()?;
        Ok(Self { patterns, trailing_run: true })
    }

    /// Whether a final line made only of option letters counts as a declaration.
    pub fn with_trailing_run(mut self, on: bool) -> Self {
        self.trailing_run = on;
        self
    }

    /// Letters of the last declaration in the reply, in order of appearance.
    fn last_declaration(&self, text: &str, options: &BTreeSet<char>) -> Option<Vec<char>> {
        let mut best: Option<(usize, Vec<char>)> = None;
        let mut consider = |pos: usize, letters: Vec<char>| {
            if best.as_ref().is_none_or(|(p, _)| pos >= *p) {
                best = Some((pos, letters));
            }
        };
        for re in &self.patterns {
            for m in re.find_iter(text) {
                if let Some(letters) = scan_after(&text[m.end()..], options) {
                    consider(m.start(), letters);
                }
            }
        }
        if self.trailing_run {
            if let Some((pos, letters)) = trailing_line(text, options) {
                consider(pos, letters);
            }
        }
        best.map(|(_, l)| l)
    }

    pub fn extract(&self, text: &str, item: &BenchItem) -> Extracted {
        let options: BTreeSet<char> = item.options.keys().copied().collect();
        let Some(letters) = self.last_declaration(text, &options) else {
            return Extracted::Unanswered;
        };
        match item.kind {
            BenchKind::Smcq => Extracted::Choices(letters.into_iter().take(1).collect()),
            _ => Extracted::Choices(letters.into_iter().collect()),
        }
    }
}

pub fn extract_choices(text: &str, item: &BenchItem) -> Extracted {
    Extractor::default().extract(text, item)
}

/// Canonical rendering of an extraction, which extracts back to itself.
pub fn render_choices(extracted: &Extracted) -> String {
    match extracted {
        Extracted::Choices(set) if !set.is_empty() => {
            let letters: Vec<String> = set.iter().map(char::to_string).collect();
            format!("答案：{}", letters.join("、"))
        }
        Extracted::Text(t) => t.clone(),
        _ => String::new(),
    }
}

fn normalize(c: char) -> char {
    match c {
        'Ａ'..='Ｚ' => char::from_u32(c as u32 - 'Ａ' as u32 + 'A' as u32).unwrap_or(c),
        _ => c,
    }
}

fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || matches!(
            c,
            ',' | '，' | '、' | '和' | '与' | '及' | '/' | '&' | '(' | ')' | '（' | '）' | '【' | '】' | '[' | ']' | '"'
                | '“' | '”' | '\'' | '*'
        )
}

fn is_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '!' | '?' | '.' | ';' | '；')
}

/// Splits text into ASCII-letter words (normalized) and single other chars.
fn pieces(text: &str) -> Vec<(usize, String)> {
    let mut out: Vec<(usize, String)> = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut word = String::new();
    for (i, raw) in text.char_indices() {
        let c = normalize(raw);
        if c.is_ascii_alphabetic() {
            if word_start.is_none() {
                word_start = Some(i);
            }
            word.push(c);
            continue;
        }
        if let Some(s) = word_start.take() {
            out.push((s, std::mem::take(&mut word)));
        }
        out.push((i, c.to_string()));
    }
    if let Some(s) = word_start {
        out.push((s, word));
    }
    out
}

/// An ASCII word made only of option letters, e.g. "A" or "ACD".
fn letter_word(p: &str, options: &BTreeSet<char>) -> Option<Vec<char>> {
    (!p.is_empty() && p.chars().all(|c| options.contains(&c))).then(|| p.chars().collect())
}

/// Letters declared right after a keyword: short filler, then a run of
/// letter words joined by separators.
fn scan_after(rest: &str, options: &BTreeSet<char>) -> Option<Vec<char>> {
    let ps = pieces(rest);
    let mut i = 0;
    let mut filler = 0usize;
    while i < ps.len() {
        let p = &ps[i].1;
        if letter_word(p, options).is_some() {
            break;
        }
        if p.chars().count() == 1 && is_terminator(p.chars().next().unwrap_or(' ')) {
            return None;
        }
        filler += p.chars().count();
        if filler > MAX_FILLER {
            return None;
        }
        i += 1;
    }
    let mut letters = Vec::new();
    while i < ps.len() {
        let p = &ps[i].1;
        if let Some(ls) = letter_word(p, options) {
            letters.extend(ls);
        } else if p.chars().count() != 1 || !is_separator(p.chars().next().unwrap_or('x')) {
            break;
        }
        i += 1;
    }
    (!letters.is_empty()).then_some(letters)
}

/// The last non-empty line, when it holds nothing but letters and separators.
fn trailing_line(text: &str, options: &BTreeSet<char>) -> Option<(usize, Vec<char>)> {
    let trimmed = text.trim_end();
    let start = trimmed.rfind('\n').map_or(0, |i| i + 1);
    let line = &trimmed[start..];
    let mut letters = Vec::new();
    for (_, p) in pieces(line) {
        if let Some(ls) = letter_word(&p, options) {
            letters.extend(ls);
        } else if !(p.chars().count() == 1 && (is_separator(p.chars().next().unwrap_or('x')) || p == ".")) {
            return None;
        }
    }
    (!letters.is_empty()).then_some((start, letters))
}
