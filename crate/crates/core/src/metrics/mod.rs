//! Similarity scoring, feedback disparity and correlation.
//!
//! ΔD is `100 - sim(x', x)`: how far the back-translation drifted from the
//! source. ΔC is the score difference between a dual-reflect run and the
//! zero-shot baseline. [`pearson`] relates the two over a batch.

mod chrf;
mod export;
mod scores;

use serde::{Deserialize, Serialize};

pub use chrf::{chrf, Chrf, BETA, CHRF_ID, MAX_ORDER};
pub use export::{
    export_for_external_scoring, read_export, ExportError, ExportManifest, ExportedBatch, ExportPaths,
    ReferencePolicy, SegmentLine,
};
pub use scores::{ScoreFile, ScoreFileError, ScoreKind, ScoreRow, EXTERNAL_ID};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("score {0} is outside 0..=100")]
    OutOfRange(f64),
    #[error("cannot compare `{ours}` scores with `{baseline}` scores")]
    MetricMismatch { ours: String, baseline: String },
    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub value: f64,
    pub metric_id: String,
}

impl SimilarityScore {
    pub fn new(value: f64, metric_id: impl Into<String>) -> Result<Self, MetricError> {
        if !(0.0..=100.0).contains(&value) {
            return Err(MetricError::OutOfRange(value));
        }
        Ok(Self {
            value,
            metric_id: metric_id.into(),
        })
    }
}

pub trait SimilarityMetric: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, hypothesis: &str, reference: &str) -> Result<SimilarityScore, MetricError>;
}

/// Built-in metric by name. Only `chrf` exists.
pub fn builtin_metric(id: &str) -> Result<Box<dyn SimilarityMetric>, MetricError> {
    match id {
        CHRF_ID => Ok(Box::new(Chrf)),
        other => Err(MetricError::UnknownMetric(other.to_string())),
    }
}

/// Feedback disparity: `100 - metric(x_prime, x)`, with the source `x` as
/// the reference side.
pub fn delta_d(x: &str, x_prime: &str, metric: &dyn SimilarityMetric) -> Result<f64, MetricError> {
    let s = metric.score(x_prime, x)?;
    Ok(100.0 - s.value)
}

/// Improvement of `ours` over `baseline`. Negative means a regression.
pub fn delta_c(ours: &SimilarityScore, baseline: &SimilarityScore) -> Result<f64, MetricError> {
    if ours.metric_id != baseline.metric_id {
        return Err(MetricError::MetricMismatch {
            ours: ours.metric_id.clone(),
            baseline: baseline.metric_id.clone(),
        });
    }
    Ok(ours.value - baseline.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityRecord {
    pub task_id: String,
    pub delta_d: f64,
    pub delta_c: f64,
    /// Judgment round the back-translation came from.
    pub iteration_observed: u32,
}

/// Sample Pearson correlation between ΔD and ΔC.
pub fn pearson(records: &[DisparityRecord]) -> Result<f64, MetricError> {
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.delta_d, r.delta_c)).collect();
    pearson_pairs(&pairs)
}

pub fn pearson_pairs(pairs: &[(f64, f64)]) -> Result<f64, MetricError> {
    if pairs.len() < 2 {
        return Err(MetricError::DegenerateSample("need at least two points"));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(MetricError::DegenerateSample("non-finite value"));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::DegenerateSample("zero variance"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(v: f64) -> SimilarityScore {
        SimilarityScore::new(v, CHRF_ID).unwrap()
    }

    #[test]
    fn disparity() {
        assert_eq!(delta_d("Hello world", "Hello world", &Chrf).unwrap(), 0.0);
        assert_eq!(delta_d("abc", "xyz", &Chrf).unwrap(), 100.0);
        assert!(delta_d("", "abc", &Chrf).is_err());
    }

    #[test]
    fn improvement() {
        assert_eq!(delta_c(&score(86.0), &score(86.0)).unwrap(), 0.0);
        assert_eq!(delta_c(&score(84.0), &score(86.0)).unwrap(), -2.0);
        let other = SimilarityScore::new(80.0, "comet").unwrap();
        assert!(matches!(
            delta_c(&score(80.0), &other),
            Err(MetricError::MetricMismatch { .. })
        ));
        assert!(SimilarityScore::new(100.5, "x").is_err());
    }

    #[test]
    fn correlation_edges() {
        let line: Vec<_> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert!((pearson_pairs(&line).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<_> = (0..5).map(|i| (i as f64, -(i as f64))).collect();
        assert!((pearson_pairs(&neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson_pairs(&[(1.0, 2.0)]).is_err());
        assert!(pearson_pairs(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }
}
