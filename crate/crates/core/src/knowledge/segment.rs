//! Fixed-length book segmentation snapped to sentence or paragraph ends.

use crate::model::BookSpan;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Sentence,
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Characters per span before snapping.
    pub target_len: usize,
    pub boundary: Boundary,
    /// How far (in characters) a cut may move from its target. `None`
    /// allows one sentence: anything after the previous cut and before the
    /// next target.
    pub max_overshoot: Option<usize>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { target_len: 800, boundary: Boundary::Sentence, max_overshoot: None }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("target_len must be positive")]
    ZeroTarget,
    #[error("book text is empty")]
    EmptyText,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub spans: Vec<BookSpan>,
    /// Character offsets where no boundary was in reach.
    pub hard_cuts: Vec<usize>,
}

const TERMINALS: &[char] = &['。', '！', '？', '.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', '”', '’', '」', '』', ')', '）', '》', '】'];

/// Character offsets where a span may end, strictly inside the text.
/// Whitespace after a sentence end stays with the sentence.
pub fn boundaries(chars: &[char], mode: Boundary) -> Vec<usize> {
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        let hit = match mode {
            Boundary::Sentence => TERMINALS.contains(&c),
            Boundary::Paragraph => c == '\n',
        };
        if !hit {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        match mode {
            Boundary::Sentence => {
                while j < n && CLOSERS.contains(&chars[j]) {
                    j += 1;
                }
                // "3.14" and "e.g" are not sentence ends.
                if c == '.' && j < n && chars[j].is_ascii_alphanumeric() {
                    i = j;
                    continue;
                }
                while j < n && chars[j].is_whitespace() {
                    j += 1;
                }
            }
            Boundary::Paragraph => {
                let mut newlines = 1;
                while j < n && chars[j].is_whitespace() {
                    newlines += usize::from(chars[j] == '\n');
                    j += 1;
                }
                if newlines < 2 {
                    i = j;
                    continue;
                }
            }
        }
        if j < n {
            out.push(j);
        }
        i = j;
    }
    out
}

/// Splits `text` into spans of roughly `target_len` characters. Cut `m`
/// goes to the boundary nearest `m * target_len` (earlier one on a tie);
/// without a boundary in reach the text is cut exactly at the target.
pub fn segment_book(book_id: &str, text: &str, cfg: &SegmentConfig) -> Result<Segmentation, SegmentError> {
    if cfg.target_len == 0 {
        return Err(SegmentError::ZeroTarget);
    }
    if text.is_empty() {
        return Err(SegmentError::EmptyText);
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let bounds = boundaries(&chars, cfg.boundary);
    let len = cfg.target_len;
    let mut cuts = Vec::new();
    let mut hard_cuts = Vec::new();
    let mut last = 0usize;
    let mut target = len;
    while target < n {
        if target > last {
            let (lo, hi) = match cfg.max_overshoot {
                Some(w) => (target.saturating_sub(w).max(last + 1), target + w),
                None => (last + 1, target + len - 1),
            };
            let best = bounds
                .iter()
                .copied()
                .filter(|b| (lo..=hi).contains(b))
                .min_by_key(|b| (b.abs_diff(target), *b));
            let cut = match best {
                Some(b) => b,
                None => {
                    log::warn!("{book_id}: no boundary near offset {target}, cutting hard");
                    hard_cuts.push(target);
                    target
                }
            };
            cuts.push(cut);
            last = cut;
        }
        target += len;
    }
    cuts.push(n);

    let byte_at: Vec<usize> = text.char_indices().map(|(b, _)| b).chain([text.len()]).collect();
    let mut start = 0usize;
    let spans = cuts
        .into_iter()
        .enumerate()
        .map(|(ordinal, end)| {
            let span = BookSpan {
                book_id: book_id.to_string(),
                ordinal,
                char_range: (start, end),
                text: text[byte_at[start]..byte_at[end]].to_string(),
            };
            start = end;
            span
        })
        .collect();
    Ok(Segmentation { spans, hard_cuts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::book_span_violations;
    use proptest::prelude::*;

    fn seg(text: &str, target_len: usize) -> Segmentation {
        segment_book("b", text, &SegmentConfig { target_len, ..Default::default() }).unwrap()
    }

    #[test]
    fn exact_length_is_one_span() {
        let text = format!("{}.", "a".repeat(9));
        assert_eq!(seg(&text, 10).spans.len(), 1);
        assert_eq!(seg("short.", 800).spans[0].text, "short.");
    }

    #[test]
    fn nearest_sentence_end_oracle() {
        // Sentence i ends at 100 * (i + 1).
        let sentence = |i: usize| format!("{}{}。", char::from(b'a' + i as u8), "x".repeat(98));
        let text: String = (0..10).map(sentence).collect();
        let ends: Vec<usize> = (1..10).map(|i| i * 100).collect();
        let target = 350;
        let mut expected = Vec::new();
        let mut last = 0;
        let mut m = target;
        while m < 1000 {
            if m > last {
                let c = *ends
                    .iter()
                    .filter(|e| **e > last && **e < m + target)
                    .min_by_key(|e| (e.abs_diff(m), **e))
                    .unwrap();
                expected.push(c);
                last = c;
            }
            m += target;
        }
        let s = seg(&text, target);
        let got: Vec<usize> = s.spans.iter().map(|s| s.char_range.1).collect();
        expected.push(1000);
        assert_eq!(got, expected);
        assert_eq!(got[0], 300, "tie between 300 and 400 goes earlier");
        assert!(book_span_violations(&text, &s.spans).is_empty());
    }

    #[test]
    fn hard_cut_without_boundaries() {
        let text = "无".repeat(25);
        let s = seg(&text, 10);
        assert_eq!(s.hard_cuts, vec![10, 20]);
        assert_eq!(s.spans.iter().map(|s| s.text.chars().count()).collect::<Vec<_>>(), vec![10, 10, 5]);
    }

    #[test]
    fn paragraph_mode() {
        let text = "第一段。还是第一段。\n\n第二段。\n\n第三段很长很长。";
        let cfg = SegmentConfig { target_len: 8, boundary: Boundary::Paragraph, max_overshoot: None };
        let s = segment_book("b", text, &cfg).unwrap();
        assert_eq!(s.spans[0].text, "第一段。还是第一段。\n\n");
        assert!(book_span_violations(text, &s.spans).is_empty());
    }

    #[test]
    fn decimals_are_not_sentence_ends() {
        let chars: Vec<char> = "Pi is 3.14. Next. \"Quoted.\" end".chars().collect();
        let b = boundaries(&chars, Boundary::Sentence);
        let at: Vec<String> = b.iter().map(|i| chars[..*i].iter().collect()).collect();
        assert_eq!(at, vec!["Pi is 3.14. ", "Pi is 3.14. Next. ", "Pi is 3.14. Next. \"Quoted.\" "]);
    }

    #[test]
    fn bad_input() {
        assert_eq!(segment_book("b", "", &SegmentConfig::default()), Err(SegmentError::EmptyText));
        let cfg = SegmentConfig { target_len: 0, ..Default::default() };
        assert_eq!(segment_book("b", "x", &cfg), Err(SegmentError::ZeroTarget));
    }

    proptest! {
        #[test]
        fn lossless(text in "[a-z。.！?!\n 心理学\u{1F600}]{1,300}", len in 1usize..60, para in any::<bool>(), w in proptest::option::of(0usize..20)) {
            let cfg = SegmentConfig { target_len: len, boundary: if para { Boundary::Paragraph } else { Boundary::Sentence }, max_overshoot: w };
            let s = segment_book("b", &text, &cfg).unwrap();
            prop_assert!(book_span_violations(&text, &s.spans).is_empty());
        }
    }
}
