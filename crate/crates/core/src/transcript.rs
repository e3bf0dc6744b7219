//! Append-only, line-delimited run transcripts.
//!
//! Every backend call becomes one [`TranscriptEntry`]. [`JsonlStore`] keeps
//! one `{run_id}.jsonl` file per run, writes each entry as a single JSON line
//! and syncs it to disk before `append` returns, so a crash at any point
//! leaves a prefix of the run on disk.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::backend::Usage;
use crate::prompts::MessageSequence;
use crate::stage::Stage;

pub const SCHEMA_VERSION: u32 = 1;

/// Volatile fields left out of the canonical form.
const VOLATILE: [&str; 2] = ["started_at", "ended_at"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub schema_version: u32,
    pub run_id: String,
    pub task_id: String,
    pub seq: u64,
    pub stage: Stage,
    pub iteration: u32,
    pub rendered_prompt: MessageSequence,
    pub raw_output: String,
    #[serde(default)]
    pub parsed_summary: Option<String>,
    #[serde(default)]
    pub usage: Usage,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Set when the backend call failed; `raw_output` is then empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TranscriptEntry {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("transcript entries always serialize")
    }

    /// Stable serialization without timestamps, with sorted keys. Two runs
    /// that made the same calls and got the same replies produce
    /// byte-identical canonical forms.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("transcript entries always serialize");
        if let Some(map) = value.as_object_mut() {
            for key in VOLATILE {
                map.remove(key);
            }
        }
        value.to_string()
    }
}

/// Canonical form of a whole run, one entry per line.
pub fn canonical_transcript(entries: &[TranscriptEntry]) -> String {
    entries
        .iter()
        .map(|e| e.canonical_json() + "\n")
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("run `{run_id}`: expected seq {expected}, got {got}")]
    SequenceViolation { run_id: String, expected: u64, got: u64 },
    #[error("no transcript for run `{0}`")]
    UnknownRun(String),
    #[error("`{0}` cannot be used as a run id")]
    InvalidRunId(String),
    #[error("transcript storage: {0}")]
    Io(#[from] std::io::Error),
}

pub trait TranscriptSink: Send + Sync {
    /// Persists one entry. `entry.seq` must follow the last seq of its run
    /// (the first entry of a run has seq 0).
    fn append(&self, entry: &TranscriptEntry) -> Result<(), TranscriptError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptLine {
    /// 1-based line number in the run file.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedRun {
    pub entries: Vec<TranscriptEntry>,
    pub corrupt: Vec<CorruptLine>,
}

fn check_run_id(run_id: &str) -> Result<(), TranscriptError> {
    let ok = !run_id.is_empty()
        && run_id != "."
        && run_id != ".."
        && !run_id.contains(['/', '\\', '\0']);
    if ok {
        Ok(())
    } else {
        Err(TranscriptError::InvalidRunId(run_id.to_string()))
    }
}

struct RunWriter {
    file: File,
    next_seq: u64,
}

/// Directory of per-run JSONL transcript files.
pub struct JsonlStore {
    dir: PathBuf,
    writers: Mutex<HashMap<String, RunWriter>>,
}

impl std::fmt::Debug for JsonlStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonlStore").field("dir", &self.dir).finish()
    }
}

impl JsonlStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TranscriptError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            writers: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, run_id: &str) -> PathBuf {
        self.dir.join(format!("{run_id}.jsonl"))
    }

    /// Opens a run file for appending. An existing file continues after its
    /// last readable entry; a torn final line is closed off so new entries
    /// start on a fresh line.
    fn open_writer(&self, run_id: &str) -> Result<RunWriter, TranscriptError> {
        let path = self.path_for(run_id);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)?;
        let mut existing = String::new();
        file.read_to_string(&mut existing)?;
        let next_seq = parse_lines(&existing)
            .entries
            .last()
            .map_or(0, |e| e.seq + 1);
        if !existing.is_empty() && !existing.ends_with('\n') {
            file.seek(SeekFrom::End(0))?;
            file.write_all(b"\n")?;
            file.sync_data()?;
        }
        Ok(RunWriter { file, next_seq })
    }

    pub fn load_run(&self, run_id: &str) -> Result<LoadedRun, TranscriptError> {
        check_run_id(run_id)?;
        load_run_file(self.path_for(run_id), run_id)
    }

    /// Drops the open file handle for a run. Later appends reopen the file
    /// and continue the sequence.
    pub fn close(&self, run_id: &str) {
        self.writers.lock().unwrap().remove(run_id);
    }

    /// Run ids with a transcript in this directory, sorted.
    pub fn runs(&self) -> Result<Vec<String>, TranscriptError> {
        let mut runs = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    runs.push(stem.to_string());
                }
            }
        }
        runs.sort();
        Ok(runs)
    }
}

impl TranscriptSink for JsonlStore {
    fn append(&self, entry: &TranscriptEntry) -> Result<(), TranscriptError> {
        check_run_id(&entry.run_id)?;
        let mut writers = self.writers.lock().unwrap();
        if !writers.contains_key(&entry.run_id) {
            let writer = self.open_writer(&entry.run_id)?;
            writers.insert(entry.run_id.clone(), writer);
        }
        let writer = writers.get_mut(&entry.run_id).expect("inserted above");
        if entry.seq != writer.next_seq {
            return Err(TranscriptError::SequenceViolation {
                run_id: entry.run_id.clone(),
                expected: writer.next_seq,
                got: entry.seq,
            });
        }
        let mut line = entry.to_json_line();
        line.push('\n');
        writer.file.write_all(line.as_bytes())?;
        writer.file.sync_data()?;
        writer.next_seq += 1;
        Ok(())
    }
}

/// Reads a run file. Lines that fail to parse are reported, not fatal.
pub fn load_run_file(path: impl AsRef<Path>, run_id: &str) -> Result<LoadedRun, TranscriptError> {
    let text = match fs::read(path.as_ref()) {
        Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(TranscriptError::UnknownRun(run_id.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(parse_lines(&text))
}

fn parse_lines(text: &str) -> LoadedRun {
    let mut run = LoadedRun::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TranscriptEntry>(line) {
            Ok(entry) if entry.schema_version <= SCHEMA_VERSION => run.entries.push(entry),
            Ok(entry) => run.corrupt.push(CorruptLine {
                line: i + 1,
                message: format!("unsupported schema_version {}", entry.schema_version),
            }),
            Err(e) => run.corrupt.push(CorruptLine {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    run.entries.sort_by_key(|e| e.seq);
    run
}

/// In-memory sink, mostly for tests and examples.
#[derive(Debug, Default)]
pub struct MemorySink {
    runs: Mutex<HashMap<String, Vec<TranscriptEntry>>>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&self, run_id: &str) -> Option<Vec<TranscriptEntry>> {
        self.runs.lock().unwrap().get(run_id).cloned()
    }
}

impl TranscriptSink for MemorySink {
    fn append(&self, entry: &TranscriptEntry) -> Result<(), TranscriptError> {
        let mut runs = self.runs.lock().unwrap();
        let run = runs.entry(entry.run_id.clone()).or_default();
        let expected = run.len() as u64;
        if entry.seq != expected {
            return Err(TranscriptError::SequenceViolation {
                run_id: entry.run_id.clone(),
                expected,
                got: entry.seq,
            });
        }
        run.push(entry.clone());
        Ok(())
    }
}
