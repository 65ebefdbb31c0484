//! Pairwise similarity scores: compression ratio, ROUGE-1 F1, symmetrized
//! sentence-level BLEU, and cosine similarity.
//!
//! All four scores are symmetric in the two texts. BLEU is made symmetric
//! explicitly by scoring both directions and averaging, because paraphrase
//! corpora do not guarantee a consistent original-to-rewrite orientation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{char_len, tokenize, ParaphrasePair};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    /// A text or its token sequence was empty.
    #[error("{which} has no content to score")]
    EmptyText { which: &'static str },
    #[error("vector dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
}

/// The four scalar similarity features of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScores {
    /// Shorter over longer character length, in (0, 1].
    pub compression_ratio: f64,
    /// Unigram-overlap F1 with clipped counts, in [0, 1].
    pub rouge1_f: f64,
    /// Mean of both directional sentence-BLEU scores, in [0, 1].
    pub bleu_sym: f64,
    /// Cosine of the two embedding vectors, in [-1, 1].
    pub cosine_sim: f64,
}

impl SimilarityScores {
    /// Field names in vector order, shared with the feature schema.
    pub const NAMES: [&'static str; 4] =
        ["compression_ratio", "rouge1_f", "bleu_sym", "cosine_sim"];

    /// Scores a pair given the two embedding vectors for its texts.
    pub fn for_pair(
        pair: &ParaphrasePair,
        emb_a: &[f64],
        emb_b: &[f64],
    ) -> Result<SimilarityScores, MetricError> {
        Ok(SimilarityScores {
            compression_ratio: compression_ratio(pair)?,
            rouge1_f: rouge1_f(pair)?,
            bleu_sym: bleu_sym(pair)?,
            cosine_sim: cosine_sim(emb_a, emb_b)?,
        })
    }
}

/// Ratio of the shorter to the longer text in characters, in (0, 1].
pub fn compression_ratio(pair: &ParaphrasePair) -> Result<f64, MetricError> {
    let la = char_len(&pair.text_a);
    let lb = char_len(&pair.text_b);
    if la == 0 {
        return Err(MetricError::EmptyText { which: "text_a" });
    }
    if lb == 0 {
        return Err(MetricError::EmptyText { which: "text_b" });
    }
    Ok(la.min(lb) as f64 / la.max(lb) as f64)
}

fn counts<'a>(tokens: &[&'a str]) -> HashMap<&'a str, u32> {
    let mut map = HashMap::new();
    for &tok in tokens {
        *map.entry(tok).or_insert(0) += 1;
    }
    map
}

/// ROUGE-1 F1 over token forms, with per-type counts clipped to the smaller
/// side: m = Σ_w min(count_a(w), count_b(w)); P = m/|a|, R = m/|b|.
pub fn rouge1_f_tokens(a: &[&str], b: &[&str]) -> Result<f64, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptyText { which: "text_a" });
    }
    if b.is_empty() {
        return Err(MetricError::EmptyText { which: "text_b" });
    }
    let ca = counts(a);
    let cb = counts(b);
    let m: u32 = ca
        .iter()
        .map(|(tok, &na)| na.min(cb.get(tok).copied().unwrap_or(0)))
        .sum();
    if m == 0 {
        return Ok(0.0);
    }
    let p = m as f64 / a.len() as f64;
    let r = m as f64 / b.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// [`rouge1_f_tokens`] over a pair's tokenized texts.
pub fn rouge1_f(pair: &ParaphrasePair) -> Result<f64, MetricError> {
    let ta = tokenize(&pair.text_a);
    let tb = tokenize(&pair.text_b);
    rouge1_f_tokens(&ta.forms(), &tb.forms())
}

/// One direction of sentence-level BLEU, candidate scored against reference.
///
/// Up to 4-grams with uniform weights. Counts are clipped against the
/// reference. Orders n ≥ 2 are smoothed as (matches+1)/(candidates+1), which
/// makes an order with no candidate n-grams contribute a factor of 1; a
/// candidate with zero unigram matches scores a hard 0. The brevity penalty
/// is exp(1 - |ref|/|cand|) when the candidate is not longer.
fn bleu_directional(cand: &[&str], reference: &[&str]) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_grams: Vec<&[&str]> = if cand.len() >= n {
            cand.windows(n).collect()
        } else {
            Vec::new()
        };
        let ref_grams: Vec<&[&str]> = if reference.len() >= n {
            reference.windows(n).collect()
        } else {
            Vec::new()
        };
        let mut ref_counts: HashMap<&[&str], u32> = HashMap::new();
        for g in ref_grams {
            *ref_counts.entry(g).or_insert(0) += 1;
        }
        let mut cand_counts: HashMap<&[&str], u32> = HashMap::new();
        for g in &cand_grams {
            *cand_counts.entry(g).or_insert(0) += 1;
        }
        let matches: u32 = cand_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if n == 1 {
            if matches == 0 {
                return 0.0;
            }
            matches as f64 / cand_grams.len() as f64
        } else {
            (matches as f64 + 1.0) / (cand_grams.len() as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = if cand.len() > reference.len() {
        1.0
    } else {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    };
    bp * (log_sum / 4.0).exp()
}

/// Symmetrized BLEU: each side scored once as candidate, results averaged.
pub fn bleu_sym_tokens(a: &[&str], b: &[&str]) -> Result<f64, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptyText { which: "text_a" });
    }
    if b.is_empty() {
        return Err(MetricError::EmptyText { which: "text_b" });
    }
    Ok((bleu_directional(a, b) + bleu_directional(b, a)) / 2.0)
}

/// [`bleu_sym_tokens`] over a pair's tokenized texts.
pub fn bleu_sym(pair: &ParaphrasePair) -> Result<f64, MetricError> {
    let ta = tokenize(&pair.text_a);
    let tb = tokenize(&pair.text_b);
    bleu_sym_tokens(&ta.forms(), &tb.forms())
}

/// Cosine similarity of two equal-length vectors, clamped to [-1, 1] so
/// accumulated rounding can never push it out of range.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (&x, &y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}
