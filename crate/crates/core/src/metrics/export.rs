use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::TranslationTask;

/// What to do about the `.ref.txt` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferencePolicy {
    /// Every task must carry a reference.
    Require,
    /// Never write references.
    Omit,
    /// Write references when all tasks have one, skip when none do, and
    /// fail on a partial set.
    #[default]
    WhenPresent,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("nothing to export")]
    EmptyBatch,
    #[error("mixed language pairs: `{first}` and `{other}`")]
    MixedLanguagePairs { first: String, other: String },
    #[error("task `{0}` has no reference")]
    MissingReference(String),
    #[error("task `{0}` spans several lines; exported files hold one segment per line")]
    MultiLineSegment(String),
    #[error("invalid run id `{0}`")]
    InvalidRunId(String),
    #[error("export files disagree: {0}")]
    Misaligned(String),
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLine {
    /// 1-based line number in every export file.
    pub line: usize,
    pub task_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub run_id: String,
    pub source_lang: String,
    pub target_lang: String,
    pub has_reference: bool,
    pub segments: Vec<SegmentLine>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub source: PathBuf,
    pub hypothesis: PathBuf,
    pub reference: Option<PathBuf>,
    pub manifest: PathBuf,
}

impl ExportPaths {
    pub fn new(dir: &Path, run_id: &str) -> Self {
        Self {
            source: dir.join(format!("{run_id}.src.txt")),
            hypothesis: dir.join(format!("{run_id}.hyp.txt")),
            reference: Some(dir.join(format!("{run_id}.ref.txt"))),
            manifest: dir.join(format!("{run_id}.manifest.json")),
        }
    }
}

/// Writes `{run_id}.src.txt`, `{run_id}.hyp.txt`, optionally
/// `{run_id}.ref.txt`, and `{run_id}.manifest.json` into `dir`. Line `i` of
/// every text file belongs to the same task. UTF-8, LF endings.
pub fn export_for_external_scoring(
    dir: &Path,
    run_id: &str,
    batch: &[(&TranslationTask, &str)],
    references: ReferencePolicy,
) -> Result<ExportPaths, ExportError> {
    if run_id.is_empty() || run_id.contains(['/', '\\']) || run_id.starts_with('.') {
        return Err(ExportError::InvalidRunId(run_id.to_string()));
    }
    let (first, _) = batch.first().ok_or(ExportError::EmptyBatch)?;
    for (task, hyp) in batch {
        if (&task.source_lang, &task.target_lang) != (&first.source_lang, &first.target_lang) {
            return Err(ExportError::MixedLanguagePairs {
                first: format!("{}-{}", first.source_lang, first.target_lang),
                other: format!("{}-{}", task.source_lang, task.target_lang),
            });
        }
        let texts = [Some(task.source_text.as_str()), Some(*hyp), task.reference.as_deref()];
        if texts.iter().flatten().any(|t| t.contains(['\n', '\r'])) {
            return Err(ExportError::MultiLineSegment(task.id.clone()));
        }
    }

    let with_refs = match references {
        ReferencePolicy::Omit => false,
        ReferencePolicy::Require => true,
        ReferencePolicy::WhenPresent => batch.iter().any(|(t, _)| t.reference.is_some()),
    };
    if with_refs {
        if let Some((t, _)) = batch.iter().find(|(t, _)| t.reference.is_none()) {
            return Err(ExportError::MissingReference(t.id.clone()));
        }
    }

    let mut paths = ExportPaths::new(dir, run_id);
    fs::create_dir_all(dir)?;
    fs::write(&paths.source, join_lines(batch.iter().map(|(t, _)| t.source_text.as_str())))?;
    fs::write(&paths.hypothesis, join_lines(batch.iter().map(|(_, h)| *h)))?;
    if with_refs {
        let refs = batch.iter().map(|(t, _)| t.reference.as_deref().unwrap_or_default());
        fs::write(paths.reference.as_ref().unwrap(), join_lines(refs))?;
    } else {
        paths.reference = None;
    }
    let manifest = ExportManifest {
        run_id: run_id.to_string(),
        source_lang: first.source_lang.clone(),
        target_lang: first.target_lang.clone(),
        has_reference: with_refs,
        segments: batch
            .iter()
            .enumerate()
            .map(|(i, (t, _))| SegmentLine {
                line: i + 1,
                task_id: t.id.clone(),
            })
            .collect(),
    };
    fs::write(&paths.manifest, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(paths)
}

fn join_lines<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}

/// Files written by [`export_for_external_scoring`], read back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedBatch {
    pub manifest: ExportManifest,
    pub sources: Vec<String>,
    pub hypotheses: Vec<String>,
    pub references: Option<Vec<String>>,
}

pub fn read_export(dir: &Path, run_id: &str) -> Result<ExportedBatch, ExportError> {
    let paths = ExportPaths::new(dir, run_id);
    let manifest: ExportManifest = serde_json::from_str(&fs::read_to_string(&paths.manifest)?)?;
    let n = manifest.segments.len();
    let read = |p: &Path| -> Result<Vec<String>, ExportError> {
        let text = fs::read_to_string(p)?;
        let lines: Vec<String> = match text.strip_suffix('\n') {
            Some(body) => body.split('\n').map(str::to_string).collect(),
            None if text.is_empty() => Vec::new(),
            None => return Err(ExportError::Misaligned(format!("{} lacks a final newline", p.display()))),
        };
        if lines.len() != n {
            return Err(ExportError::Misaligned(format!(
                "{} has {} lines, manifest lists {n}",
                p.display(),
                lines.len()
            )));
        }
        Ok(lines)
    };
    let references = match (&paths.reference, manifest.has_reference) {
        (Some(p), true) => Some(read(p)?),
        _ => None,
    };
    Ok(ExportedBatch {
        sources: read(&paths.source)?,
        hypotheses: read(&paths.hypothesis)?,
        references,
        manifest,
    })
}
