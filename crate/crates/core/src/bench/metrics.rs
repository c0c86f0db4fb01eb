//! Surface-overlap metrics for case-QA answers: ROUGE-1, ROUGE-L and BLEU-4.
//!
//! All functions have a token-level form (`*_tokens`) and a text form that
//! tokenizes with a [`TokenizerMode`] first. Scores are in [0, 1].

use super::tokenize::{tokenize, TokenizerMode};
use std::collections::HashMap;
use std::hash::Hash;

fn counts<T: Hash + Eq>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for it in items {
        *m.entry(it).or_insert(0) += 1;
    }
    m
}

fn f1(matches: usize, cand_len: usize, ref_len: usize) -> f64 {
    if matches == 0 || cand_len == 0 || ref_len == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_len as f64;
    let r = matches as f64 / ref_len as f64;
    2.0 * p * r / (p + r)
}

/// Unigram overlap F1 with clipped counts.
pub fn rouge1_f1_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let cand = counts(candidate.iter().map(AsRef::as_ref));
    let refc = counts(reference.iter().map(AsRef::as_ref));
    let matches: usize = cand.iter().map(|(tok, n)| (*n).min(refc.get(tok).copied().unwrap_or(0))).sum();
    f1(matches, candidate.len(), reference.len())
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l_f1_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let a: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    f1(lcs_len(&a, &b), a.len(), b.len())
}

/// Clipped n-gram matches and total candidate n-grams.
fn ngram_stats(candidate: &[&str], reference: &[&str], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let cand = counts(candidate.windows(n));
    let refc = if reference.len() >= n { counts(reference.windows(n)) } else { HashMap::new() };
    let matches = cand.iter().map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0))).sum();
    (matches, candidate.len() - n + 1)
}

/// Sentence-level BLEU-4.
///
/// Geometric mean of modified 1..4-gram precisions times the brevity penalty.
/// For n >= 2 a zero match count is smoothed to `1 / (total + 1)`; a zero
/// unigram precision gives 0.
pub fn bleu4_tokens<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let (m, total) = ngram_stats(&cand, &refr, n);
        let p = if m > 0 {
            m as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let (c, r) = (cand.len() as f64, refr.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    (bp * (log_sum / 4.0).exp()).clamp(0.0, 1.0)
}

pub fn rouge1_f1(candidate: &str, reference: &str, mode: TokenizerMode) -> f64 {
    rouge1_f1_tokens(&tokenize(candidate, mode), &tokenize(reference, mode))
}

pub fn rouge_l_f1(candidate: &str, reference: &str, mode: TokenizerMode) -> f64 {
    rouge_l_f1_tokens(&tokenize(candidate, mode), &tokenize(reference, mode))
}

pub fn bleu4(candidate: &str, reference: &str, mode: TokenizerMode) -> f64 {
    bleu4_tokens(&tokenize(candidate, mode), &tokenize(reference, mode))
}
