use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use super::{CliError, Settings};
use crate::backend::{Backend, Usage};
use crate::metrics::{export_for_external_scoring, ExportPaths, ReferencePolicy};
use crate::pipeline::{IterationFinal, Mode, Pipeline, PipelineError, Recorder, TerminationReason, TranslationTask};
use crate::transcript::JsonlStore;

pub const MANIFEST_FILE: &str = "run.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const RESULTS_TSV: &str = "results.tsv";
pub const TRANSCRIPT_DIR: &str = "transcripts";

/// One batch run over a corpus file.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    /// Plain text, one segment per line, optionally `source\treference`.
    pub input: PathBuf,
    pub source_lang: String,
    pub target_lang: String,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/transcripts`.
    pub transcript_dir: Option<PathBuf>,
    /// Base name of the export files. Defaults to `<corpus stem>.<mode>`.
    pub run_id: Option<String>,
    pub settings: Settings,
}

impl BatchSpec {
    pub fn mode(&self) -> Mode {
        self.settings.mode
    }

    pub fn transcript_dir(&self) -> PathBuf {
        self.transcript_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join(TRANSCRIPT_DIR))
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| {
            let stem = self
                .input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into());
            format!("{stem}.{}", self.mode().as_str())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    /// The corpus line could not become a task; no backend calls were made.
    Invalid,
    Failed,
}

/// One row of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    /// 1-based corpus line.
    pub index: usize,
    pub task_id: String,
    pub source: String,
    #[serde(default)]
    pub reference: Option<String>,
    pub source_lang: String,
    pub target_lang: String,
    pub status: TaskStatus,
    #[serde(default)]
    pub final_translation: Option<String>,
    #[serde(default)]
    pub iterations_used: u32,
    #[serde(default)]
    pub termination_reason: Option<TerminationReason>,
    #[serde(default)]
    pub fallback_used: bool,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub usage: Usage,
    #[serde(default)]
    pub intermediate_finals: Vec<IterationFinal>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchCounts {
    pub total: usize,
    pub completed: usize,
    pub invalid: usize,
    pub failed: usize,
    pub backend_failures: usize,
    pub fallback_used: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportInfo {
    pub run_id: String,
    pub source: PathBuf,
    pub hypothesis: PathBuf,
    pub reference: Option<PathBuf>,
    pub manifest: PathBuf,
}

/// `run.json`: what was run and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: Mode,
    pub corpus: PathBuf,
    pub source_lang: String,
    pub target_lang: String,
    pub transcript_dir: PathBuf,
    pub settings: Settings,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub counts: BatchCounts,
    pub export: Option<ExportInfo>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub manifest: RunManifest,
    pub outcomes: Vec<TaskOutcome>,
}

impl BatchSummary {
    /// 0 when any task completed, 2 when none did and a backend failed,
    /// 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let c = &self.manifest.counts;
        if c.completed > 0 {
            super::EXIT_OK
        } else if c.backend_failures > 0 {
            super::EXIT_BACKEND
        } else {
            super::EXIT_INVALID
        }
    }
}

/// A corpus line turned into a task, or the reason it could not be.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLine {
    pub index: usize,
    pub task: TranslationTask,
    pub problem: Option<String>,
}

pub fn task_id(index: usize) -> String {
    format!("seg{index:05}")
}

/// Splits a corpus into tasks. Blank lines become invalid tasks so that
/// line numbers and task ids stay aligned.
pub fn parse_corpus(text: &str, source_lang: &str, target_lang: &str) -> Vec<CorpusLine> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let index = i + 1;
            let (source, reference) = match line.split_once('\t') {
                Some((s, r)) => (s, Some(r.trim()).filter(|r| !r.is_empty())),
                None => (line, None),
            };
            let mut task = TranslationTask::new(task_id(index), source.trim(), source_lang, target_lang);
            task.reference = reference.map(str::to_string);
            let problem = task.validate().err().map(|e| e.to_string());
            CorpusLine { index, task, problem }
        })
        .collect()
}

/// Runs every corpus line through the configured mode, at most
/// `settings.concurrency` at a time, and writes the run directory.
pub async fn run_batch(spec: &BatchSpec, backend: Arc<dyn Backend>) -> Result<BatchSummary, CliError> {
    let started_at = Utc::now();
    let text = std::fs::read_to_string(&spec.input).map_err(|e| CliError::io(&spec.input, e))?;
    let lines = parse_corpus(&text, &spec.source_lang, &spec.target_lang);
    if lines.is_empty() {
        return Err(CliError::Invalid(format!("{} holds no segments", spec.input.display())));
    }
    if spec.source_lang.trim().eq_ignore_ascii_case(spec.target_lang.trim()) {
        return Err(CliError::Invalid("source and target language are the same".into()));
    }

    std::fs::create_dir_all(&spec.out_dir).map_err(|e| CliError::io(&spec.out_dir, e))?;
    let transcript_dir = spec.transcript_dir();
    let store = Arc::new(JsonlStore::open(&transcript_dir)?);
    let templates = Arc::new(spec.settings.load_templates()?);
    let pipeline = Arc::new(
        Pipeline::new(backend, spec.settings.run.clone())
            .map_err(|e| CliError::Invalid(e.to_string()))?
            .with_templates(templates),
    );
    let mode = spec.mode();
    let total = lines.len();

    let permits = Arc::new(Semaphore::new(spec.settings.concurrency));
    let mut set = JoinSet::new();
    let mut outcomes = Vec::with_capacity(total);
    for line in lines {
        if let Some(problem) = line.problem {
            outcomes.push(outcome(line.index, &line.task, TaskStatus::Invalid, Some(problem)));
            continue;
        }
        let stale = store.path_for(&line.task.id);
        if stale.exists() {
            std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
        }
        let (pipeline, store, permits) = (pipeline.clone(), store.clone(), permits.clone());
        set.spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore is never closed");
            let task = line.task;
            let rec = Recorder::for_task(&task).with_sink(store.clone());
            let result = pipeline.run_mode(task.clone(), mode, rec).await;
            store.close(&task.id);
            let mut o = outcome(line.index, &task, TaskStatus::Completed, None);
            match result {
                Ok(r) => {
                    o.final_translation = Some(r.final_translation);
                    o.iterations_used = r.iterations_used;
                    o.termination_reason = Some(r.termination_reason);
                    o.fallback_used = r.fallback_used;
                    o.usage = r.usage;
                    o.intermediate_finals = r.intermediate_finals;
                }
                Err(e) => {
                    o.status = TaskStatus::Failed;
                    if backend_failure(&e.error) {
                        o.termination_reason = Some(TerminationReason::BackendFailure);
                    }
                    o.error = Some(e.error.to_string());
                    o.usage = e.usage;
                }
            }
            o
        });
    }

    let mut done = outcomes.len();
    while let Some(joined) = set.join_next().await {
        let o = joined.map_err(|e| CliError::Invalid(format!("task panicked: {e}")))?;
        done += 1;
        eprintln!("[{done}/{total}] {} {}", o.task_id, status_word(&o));
        outcomes.push(o);
    }
    outcomes.sort_by_key(|o| o.index);

    let counts = count(&outcomes);
    let mut notes = Vec::new();
    let export = export(spec, &outcomes, &mut notes)?;
    let manifest = RunManifest {
        run_id: spec.run_id(),
        mode,
        corpus: spec.input.clone(),
        source_lang: spec.source_lang.clone(),
        target_lang: spec.target_lang.clone(),
        transcript_dir,
        settings: spec.settings.clone(),
        started_at,
        finished_at: Utc::now(),
        counts,
        export,
        notes,
    };
    write_results(&spec.out_dir, &manifest, &outcomes)?;
    Ok(BatchSummary { manifest, outcomes })
}

fn backend_failure(e: &PipelineError) -> bool {
    e.is_backend_failure() || matches!(e, PipelineError::EmptyOutput { .. })
}

fn outcome(index: usize, task: &TranslationTask, status: TaskStatus, error: Option<String>) -> TaskOutcome {
    TaskOutcome {
        index,
        task_id: task.id.clone(),
        source: task.source_text.clone(),
        reference: task.reference.clone(),
        source_lang: task.source_lang.clone(),
        target_lang: task.target_lang.clone(),
        status,
        final_translation: None,
        iterations_used: 0,
        termination_reason: None,
        fallback_used: false,
        error,
        usage: Usage::default(),
        intermediate_finals: Vec::new(),
    }
}

fn status_word(o: &TaskOutcome) -> &'static str {
    match o.status {
        TaskStatus::Completed if o.fallback_used => "completed (fallback)",
        TaskStatus::Completed => "completed",
        TaskStatus::Invalid => "invalid",
        TaskStatus::Failed => "failed",
    }
}

fn count(outcomes: &[TaskOutcome]) -> BatchCounts {
    let mut c = BatchCounts {
        total: outcomes.len(),
        ..BatchCounts::default()
    };
    for o in outcomes {
        match o.status {
            TaskStatus::Completed => c.completed += 1,
            TaskStatus::Invalid => c.invalid += 1,
            TaskStatus::Failed => c.failed += 1,
        }
        c.fallback_used += o.fallback_used as usize;
        c.backend_failures += (o.termination_reason == Some(TerminationReason::BackendFailure)) as usize;
    }
    c
}

/// Exported files hold one segment per line, so line breaks inside a
/// translation become spaces.
fn one_line(text: &str) -> String {
    text.split(['\n', '\r']).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ")
}

fn export(spec: &BatchSpec, outcomes: &[TaskOutcome], notes: &mut Vec<String>) -> Result<Option<ExportInfo>, CliError> {
    let done: Vec<(TranslationTask, String)> = outcomes
        .iter()
        .filter(|o| o.status == TaskStatus::Completed)
        .map(|o| {
            let mut task = TranslationTask::new(&o.task_id, one_line(&o.source), &o.source_lang, &o.target_lang);
            task.reference = o.reference.as_deref().map(one_line);
            (task, one_line(o.final_translation.as_deref().unwrap_or_default()))
        })
        .collect();
    if done.is_empty() {
        notes.push("no completed tasks; nothing exported".into());
        return Ok(None);
    }
    let with_refs = done.iter().filter(|(t, _)| t.reference.is_some()).count();
    let policy = if with_refs == done.len() {
        ReferencePolicy::Require
    } else {
        if with_refs > 0 {
            notes.push(format!(
                "{with_refs} of {} completed tasks have references; reference file not written",
                done.len()
            ));
        }
        ReferencePolicy::Omit
    };
    let batch: Vec<(&TranslationTask, &str)> = done.iter().map(|(t, h)| (t, h.as_str())).collect();
    let run_id = spec.run_id();
    let ExportPaths {
        source,
        hypothesis,
        reference,
        manifest,
    } = export_for_external_scoring(&spec.out_dir, &run_id, &batch, policy)?;
    Ok(Some(ExportInfo {
        run_id,
        source,
        hypothesis,
        reference,
        manifest,
    }))
}

fn write_results(dir: &Path, manifest: &RunManifest, outcomes: &[TaskOutcome]) -> Result<(), CliError> {
    let mut jsonl = String::new();
    let mut tsv = String::from("index\ttask_id\tstatus\ttermination\titerations\tfallback\tfinal_translation\terror\n");
    for o in outcomes {
        jsonl.push_str(&serde_json::to_string(o).expect("outcomes serialize"));
        jsonl.push('\n');
        let termination = o
            .termination_reason
            .map(|t| serde_json::to_value(t).unwrap().as_str().unwrap_or_default().to_string())
            .unwrap_or_default();
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            o.index,
            o.task_id,
            serde_json::to_value(o.status).unwrap().as_str().unwrap_or_default(),
            termination,
            o.iterations_used,
            o.fallback_used,
            tsv_field(o.final_translation.as_deref().unwrap_or_default()),
            tsv_field(o.error.as_deref().unwrap_or_default()),
        ));
    }
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))
    };
    write(RESULTS_FILE, jsonl)?;
    write(RESULTS_TSV, tsv)?;
    write(
        MANIFEST_FILE,
        serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n",
    )
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest, CliError> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn load_outcomes(run_dir: &Path) -> Result<Vec<TaskOutcome>, CliError> {
    let path = run_dir.join(RESULTS_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let o: TaskOutcome = serde_json::from_str(line)
            .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(o);
    }
    out.sort_by_key(|o| o.index);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_lines() {
        let lines = parse_corpus("Hello\tBonjour\n\nWorld\n", "English", "French");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].task.id, "seg00001");
        assert_eq!(lines[0].task.reference.as_deref(), Some("Bonjour"));
        assert!(lines[1].problem.is_some());
        assert_eq!(lines[2].task.reference, None);
        assert_eq!(lines[2].index, 3);
    }

    #[test]
    fn flattening() {
        assert_eq!(one_line("a\nb\r\nc"), "a b c");
        assert_eq!(tsv_field("a\tb"), "a b");
    }
}
