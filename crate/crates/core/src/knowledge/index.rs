//! Lexical TF-IDF retrieval over book spans.

use crate::bench::{tokenize, TokenizerMode};
use crate::model::BookSpan;
use std::collections::HashMap;

pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// Position of the span in the indexed slice.
    pub doc: usize,
    pub score: f64,
}

/// Cosine similarity of TF-IDF vectors, idf = ln((1 + N) / (1 + df)) + 1.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    spans: Vec<BookSpan>,
    mode: TokenizerMode,
    idf: HashMap<String, f64>,
    /// term -> (doc, weight)
    postings: HashMap<String, Vec<(usize, f64)>>,
    norms: Vec<f64>,
}

fn terms(text: &str, mode: TokenizerMode) -> HashMap<String, f64> {
    let mut tf = HashMap::new();
    for t in tokenize(text, mode) {
        *tf.entry(t.to_lowercase()).or_insert(0.0) += 1.0;
    }
    tf
}

impl RetrievalIndex {
    pub fn build(spans: Vec<BookSpan>, mode: TokenizerMode) -> Self {
        let docs: Vec<HashMap<String, f64>> = spans.iter().map(|s| terms(&s.text, mode)).collect();
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            for t in d.keys() {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: HashMap<String, f64> =
            df.into_iter().map(|(t, f)| (t, ((1.0 + n) / (1.0 + f as f64)).ln() + 1.0)).collect();
        let mut postings: HashMap<String, Vec<(usize, f64)>> = HashMap::new();
        let mut norms = vec![0.0; docs.len()];
        for (i, d) in docs.iter().enumerate() {
            for (t, tf) in d {
                let w = tf * idf[t];
                norms[i] += w * w;
                postings.entry(t.clone()).or_default().push((i, w));
            }
            norms[i] = norms[i].sqrt();
        }
        Self { spans, mode, idf, postings, norms }
    }

    pub fn spans(&self) -> &[BookSpan] {
        &self.spans
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Up to `k` spans with a positive score, best first; ties go to the
    /// earlier span.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Hit> {
        let q = terms(query, self.mode);
        let mut dot: HashMap<usize, f64> = HashMap::new();
        let mut qnorm = 0.0;
        for (t, tf) in &q {
            let Some(idf) = self.idf.get(t) else { continue };
            let qw = tf * idf;
            qnorm += qw * qw;
            for (doc, w) in &self.postings[t] {
                *dot.entry(*doc).or_default() += qw * w;
            }
        }
        if qnorm == 0.0 {
            return Vec::new();
        }
        let qnorm = qnorm.sqrt();
        let mut hits: Vec<Hit> = dot
            .into_iter()
            .filter(|(_, d)| *d > 0.0)
            .map(|(doc, d)| Hit { doc, score: d / (qnorm * self.norms[doc]) })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.doc.cmp(&b.doc)));
        hits.truncate(k);
        hits
    }
}
