//! Greedy-matching embedding similarity between candidate and reference tokens.
//!
//! The embedding model sits behind [`Embedder`]; there is no IDF weighting
//! and no baseline rescaling.

use super::tokenize::{tokenize, TokenizerMode};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("embedding failed: {0}")]
pub struct EmbedError(pub String);

/// Maps a token sequence to one vector per token. Vectors may differ in
/// length; missing trailing components are treated as zero.
pub trait Embedder: Send + Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn bertscore_tokens(
    candidate: &[String],
    reference: &[String],
    embedder: &dyn Embedder,
) -> Result<BertScore, EmbedError> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(BertScore { precision: 0.0, recall: 0.0, f1: 0.0 });
    }
    let ce = embedder.embed(candidate)?;
    let re = embedder.embed(reference)?;
    if ce.len() != candidate.len() || re.len() != reference.len() {
        return Err(EmbedError("embedder returned the wrong number of vectors".into()));
    }
    let best = |from: &[Vec<f64>], to: &[Vec<f64>]| -> f64 {
        let total: f64 = from
            .iter()
            .map(|u| to.iter().map(|v| cosine(u, v)).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        total / from.len() as f64
    };
    let precision = best(&ce, &re);
    let recall = best(&re, &ce);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(BertScore { precision, recall, f1: f1.clamp(0.0, 1.0) })
}

pub fn bertscore_f1(
    candidate: &str,
    reference: &str,
    embedder: &dyn Embedder,
    mode: TokenizerMode,
) -> Result<f64, EmbedError> {
    bertscore_tokens(&tokenize(candidate, mode), &tokenize(reference, mode), embedder).map(|s| s.f1)
}

/// Identical tokens share a one-hot vector; distinct tokens are orthogonal.
#[derive(Default)]
pub struct OrthogonalStub {
    vocab: Mutex<HashMap<String, usize>>,
}

impl OrthogonalStub {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Embedder for OrthogonalStub {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut vocab = self.vocab.lock().map_err(|_| EmbedError("vocabulary lock poisoned".into()))?;
        Ok(tokens
            .iter()
            .map(|t| {
                let next = vocab.len();
                let idx = *vocab.entry(t.clone()).or_insert(next);
                let mut v = vec![0.0; idx + 1];
                v[idx] = 1.0;
                v
            })
            .collect())
    }
}

/// Offline embedder: hashed character n-gram features with light context
/// mixing from neighbouring tokens. A stand-in when no encoder is configured.
pub struct HashingEmbedder {
    dim: usize,
    context_weight: f64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256, context_weight: 0.25 }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, context_weight: f64) -> Self {
        Self { dim: dim.max(8), context_weight }
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let chars: Vec<char> = format!("<{token}>").chars().collect();
        for n in 1..=3 {
            for w in chars.windows(n) {
                let gram: String = w.iter().collect();
                let digest = Sha256::digest(gram.as_bytes());
                let idx = u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]]) as usize % self.dim;
                let sign = if digest[4] & 1 == 0 { 1.0 } else { -1.0 };
                v[idx] += sign;
            }
        }
        v
    }
}

impl Embedder for HashingEmbedder {
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let base: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        Ok((0..base.len())
            .map(|i| {
                let mut v = base[i].clone();
                for j in [i.wrapping_sub(1), i + 1] {
                    if let Some(n) = base.get(j) {
                        v.iter_mut().zip(n).for_each(|(a, b)| *a += self.context_weight * b);
                    }
                }
                v
            })
            .collect())
    }
}
