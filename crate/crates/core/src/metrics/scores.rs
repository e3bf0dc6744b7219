use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::SimilarityScore;

/// Metric id given to scores read from a file.
pub const EXTERNAL_ID: &str = "external";

/// Which text a per-segment score belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreKind {
    /// Final translation of the dual-reflect run, against the reference.
    DualReflect,
    /// Final translation of the zero-shot run, against the reference.
    ZeroShot,
    /// First back-translation against the source; feeds ΔD.
    BackTranslation,
    /// Dual-reflect translation extracted after round `k`.
    Iteration(u32),
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreKind::DualReflect => f.write_str("dual_reflect"),
            ScoreKind::ZeroShot => f.write_str("zero_shot"),
            ScoreKind::BackTranslation => f.write_str("back_translation"),
            ScoreKind::Iteration(k) => write!(f, "iteration_{k}"),
        }
    }
}

impl FromStr for ScoreKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dual_reflect" | "dual-reflect" => Ok(ScoreKind::DualReflect),
            "zero_shot" | "zero-shot" => Ok(ScoreKind::ZeroShot),
            "back_translation" | "back-translation" => Ok(ScoreKind::BackTranslation),
            other => other
                .strip_prefix("iteration_")
                .and_then(|k| k.parse().ok())
                .map(ScoreKind::Iteration)
                .ok_or_else(|| format!("unknown score kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub task_id: String,
    pub kind: ScoreKind,
    pub score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreFileError {
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("duplicate score for task `{task_id}` kind `{kind}`")]
    Duplicate { task_id: String, kind: ScoreKind },
    #[error("no `{kind}` score for task `{task_id}`")]
    Missing { task_id: String, kind: ScoreKind },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-segment scores from an external scorer.
///
/// Comma- or tab-separated with a `task_id,kind,score` header. Scores are
/// expected on a 0..100 scale.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreFile {
    scores: BTreeMap<(String, ScoreKind), f64>,
}

impl ScoreFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoreFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, ScoreFileError> {
        let header = text.lines().next().unwrap_or_default();
        let delimiter = if header.contains('\t') { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut out = ScoreFile::default();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let err = |message: String| ScoreFileError::Row { line, message };
            let field = |i: usize, name: &str| {
                record
                    .get(i)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| err(format!("missing {name}")))
            };
            let task_id = field(0, "task_id")?.to_string();
            let kind: ScoreKind = field(1, "kind")?.parse().map_err(err)?;
            let score: f64 = field(2, "score")?
                .parse()
                .map_err(|e| err(format!("bad score: {e}")))?;
            if !(0.0..=100.0).contains(&score) {
                return Err(err(format!("score {score} is outside 0..=100")));
            }
            out.insert(ScoreRow { task_id, kind, score })?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, row: ScoreRow) -> Result<(), ScoreFileError> {
        let key = (row.task_id, row.kind);
        if self.scores.contains_key(&key) {
            return Err(ScoreFileError::Duplicate {
                task_id: key.0,
                kind: key.1,
            });
        }
        self.scores.insert(key, row.score);
        Ok(())
    }

    pub fn get(&self, task_id: &str, kind: ScoreKind) -> Option<f64> {
        self.scores.get(&(task_id.to_string(), kind)).copied()
    }

    pub fn require(&self, task_id: &str, kind: ScoreKind) -> Result<SimilarityScore, ScoreFileError> {
        let value = self.get(task_id, kind).ok_or_else(|| ScoreFileError::Missing {
            task_id: task_id.to_string(),
            kind,
        })?;
        Ok(SimilarityScore {
            value,
            metric_id: EXTERNAL_ID.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rows in `(task_id, kind)` order.
    pub fn rows(&self) -> impl Iterator<Item = ScoreRow> + '_ {
        self.scores.iter().map(|((task_id, kind), &score)| ScoreRow {
            task_id: task_id.clone(),
            kind: *kind,
            score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_csv_and_tsv() {
        let csv = "task_id,kind,score\nseg1,dual_reflect,88.5\nseg1,zero_shot,86\nseg1,iteration_2,87\n";
        let f = ScoreFile::parse(csv).unwrap();
        assert_eq!(f.get("seg1", ScoreKind::DualReflect), Some(88.5));
        assert_eq!(f.get("seg1", ScoreKind::Iteration(2)), Some(87.0));
        let tsv = "task_id\tkind\tscore\nseg1\tback_translation\t40\n";
        let f = ScoreFile::parse(tsv).unwrap();
        assert_eq!(f.require("seg1", ScoreKind::BackTranslation).unwrap().value, 40.0);
        assert!(f.require("seg2", ScoreKind::BackTranslation).is_err());
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(ScoreFile::parse("task_id,kind,score\na,nope,1\n").is_err());
        assert!(ScoreFile::parse("task_id,kind,score\na,zero_shot,101\n").is_err());
        assert!(matches!(
            ScoreFile::parse("task_id,kind,score\na,zero_shot,1\na,zero_shot,2\n"),
            Err(ScoreFileError::Duplicate { .. })
        ));
    }

    #[test]
    fn kind_round_trip() {
        for k in [
            ScoreKind::DualReflect,
            ScoreKind::ZeroShot,
            ScoreKind::BackTranslation,
            ScoreKind::Iteration(3),
        ] {
            assert_eq!(k.to_string().parse::<ScoreKind>().unwrap(), k);
        }
    }
}
