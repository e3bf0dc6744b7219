use std::collections::HashMap;

use super::{MetricError, SimilarityMetric, SimilarityScore};

pub const CHRF_ID: &str = "chrf";
pub const MAX_ORDER: usize = 6;
pub const BETA: f64 = 2.0;

/// Character n-gram F-score, orders 1 to 6, beta 2, no word n-grams.
///
/// All whitespace is removed before counting, so `"a b"` and `"ab"` score
/// the same. Precision and recall are averaged over the orders that both
/// sides are long enough to produce, then combined into F-beta and scaled
/// to 0..100. No other normalization is applied: case and punctuation
/// count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Chrf;

impl SimilarityMetric for Chrf {
    fn id(&self) -> &str {
        CHRF_ID
    }

    fn score(&self, hypothesis: &str, reference: &str) -> Result<SimilarityScore, MetricError> {
        chrf(hypothesis, reference)
    }
}

pub fn chrf(hypothesis: &str, reference: &str) -> Result<SimilarityScore, MetricError> {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();

    let (mut precision, mut recall, mut orders) = (0.0, 0.0, 0u32);
    for n in 1..=MAX_ORDER {
        if h.len() < n || r.len() < n {
            break;
        }
        let hyp = ngram_counts(&h, n);
        let refs = ngram_counts(&r, n);
        let matched: usize = hyp
            .iter()
            .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
            .sum();
        precision += matched as f64 / (h.len() - n + 1) as f64;
        recall += matched as f64 / (r.len() - n + 1) as f64;
        orders += 1;
    }
    if orders == 0 {
        return SimilarityScore::new(0.0, CHRF_ID);
    }
    let p = precision / orders as f64;
    let r = recall / orders as f64;
    let b2 = BETA * BETA;
    let denom = b2 * p + r;
    let f = if denom == 0.0 { 0.0 } else { (1.0 + b2) * p * r / denom };
    SimilarityScore::new((100.0 * f).clamp(0.0, 100.0), CHRF_ID)
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    for w in chars.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}
