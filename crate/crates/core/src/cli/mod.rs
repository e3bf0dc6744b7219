//! Command-line front end: `translate`, `batch` and `analyze`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | invalid input, usage or configuration, I/O problems |
//! | 2 | backend failure |
//! | 3 | extraction could not be parsed (fallback used, or strict mode failed) |
//!
//! `batch` exits 0 when at least one task completed, 2 when none did and a
//! backend call failed, and 1 when no task was usable at all.

mod analyze;
mod batch;
mod settings;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

pub use analyze::{
    analyze, analyze_to_dir, finals_by_round, render_report, AnalysisReport, AnalyzeSpec, CurvePoint, MetricChoice,
    SkippedTask, ANALYSIS_JSON, ANALYSIS_TXT,
};
pub use batch::{
    load_manifest, load_outcomes, parse_corpus, run_batch, task_id, BatchCounts, BatchSpec, BatchSummary, CorpusLine,
    ExportInfo, RunManifest, TaskOutcome, TaskStatus, MANIFEST_FILE, RESULTS_FILE, RESULTS_TSV, TRANSCRIPT_DIR,
};
pub use settings::{BackendKind, FileConfig, Overrides, Settings};

use crate::backend::Backend;
use crate::metrics::ExportError;
use crate::pipeline::{Mode, Pipeline, PipelineError, PipelineResult, Recorder, RunError, TranslationTask};
use crate::transcript::{JsonlStore, TranscriptError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_PARSE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("export failed: {0}")]
    Export(#[from] ExportError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Exit code for a failed single run.
pub fn exit_code_for(error: &PipelineError) -> i32 {
    match error {
        PipelineError::Backend { .. } | PipelineError::EmptyOutput { .. } => EXIT_BACKEND,
        PipelineError::ExtractionFailed { .. } => EXIT_PARSE,
        PipelineError::InvalidTask(_)
        | PipelineError::InvalidConfig(_)
        | PipelineError::IllegalState(_)
        | PipelineError::Render(_)
        | PipelineError::Transcript(_) => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dual-reflect", version, about = "Translate with back-translation driven self-reflection")]
pub struct Cli {
    /// Settings file (TOML). Flags and DR_* variables take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Translate one text and print the result.
    Translate(TranslateArgs),
    /// Translate every line of a corpus file.
    Batch(BatchArgs),
    /// Relate feedback disparity to improvement over a zero-shot run.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Rule file for the scripted backend.
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// TOML file overriding some or all prompt templates.
    #[arg(long, value_name = "FILE")]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    /// Extract a final translation after every revision as well.
    #[arg(long)]
    pub force_extract_each_iter: bool,
    /// Fail instead of falling back to the latest draft when extraction
    /// output cannot be parsed.
    #[arg(long)]
    pub strict_extraction: bool,
}

impl EngineArgs {
    fn overrides(&self, concurrency: Option<usize>) -> Overrides {
        Overrides {
            backend: self.backend,
            script: self.script.clone(),
            templates: self.templates.clone(),
            mode: self.mode,
            concurrency,
            model: self.model.clone(),
            temperature: self.temperature,
            max_iterations: self.max_iterations,
            force_extraction_each_iteration: self.force_extract_each_iter,
            strict_extraction: self.strict_extraction,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Source language name, e.g. "Chinese".
    #[arg(long)]
    pub from: String,
    /// Target language name.
    #[arg(long)]
    pub to: String,
    /// Text to translate. Read from stdin when absent.
    #[arg(long)]
    pub text: Option<String>,
    /// Write the transcript to `<DIR>/<run id>.jsonl`.
    #[arg(long, value_name = "DIR")]
    pub transcript_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Corpus: one segment per line, optionally `source<TAB>reference`.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long)]
    pub from: String,
    #[arg(long)]
    pub to: String,
    /// Run directory for results, transcripts and export files.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub transcript_dir: Option<PathBuf>,
    /// Base name of the export files.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Pipelines running at once (default 4).
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directory of a dual-reflect batch.
    #[arg(long, value_name = "DIR")]
    pub dual_run: PathBuf,
    /// Run directory of a zero-shot batch over the same corpus.
    #[arg(long, value_name = "DIR")]
    pub baseline_run: PathBuf,
    #[arg(long, value_enum, default_value = "chrf")]
    pub metric: MetricChoice,
    /// Per-segment score file (`task_id,kind,score`) for `--metric external`.
    #[arg(long, value_name = "FILE")]
    pub scores: Option<PathBuf>,
    /// Output directory for analysis.json and analysis.txt.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command against the
/// process's stdio.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_io(
        args,
        &mut std::io::stdin().lock(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}

pub fn run_with_io<I, T>(args: I, stdin: &mut dyn Read, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start runtime: {e}");
            return EXIT_INVALID;
        }
    };
    let result = runtime.block_on(dispatch(cli, stdin, stdout, stderr));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn resolve_settings(config: Option<&Path>, overrides: &Overrides) -> Result<Settings, CliError> {
    let file = config.map(FileConfig::load).transpose()?;
    Settings::resolve(file.as_ref(), &|k| std::env::var(k).ok(), overrides)
}

async fn dispatch(
    cli: Cli,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, CliError> {
    match cli.command {
        Command::Translate(args) => {
            let settings = resolve_settings(cli.config.as_deref(), &args.engine.overrides(None))?;
            let text = match args.text {
                Some(t) => t,
                None => {
                    let mut buf = String::new();
                    stdin
                        .read_to_string(&mut buf)
                        .map_err(|e| CliError::io(Path::new("<stdin>"), e))?;
                    buf
                }
            };
            let run_id = args
                .run_id
                .unwrap_or_else(|| format!("translate-{}", uuid::Uuid::new_v4().simple()));
            let task = TranslationTask::new(run_id, text.trim(), args.from, args.to);
            let backend = settings.build_backend()?;
            let outcome = translate(task, &settings, backend, args.transcript_dir.as_deref()).await?;
            Ok(report_translation(outcome, stdout, stderr))
        }
        Command::Batch(args) => {
            let settings = resolve_settings(cli.config.as_deref(), &args.engine.overrides(args.concurrency))?;
            let spec = BatchSpec {
                input: args.input,
                source_lang: args.from,
                target_lang: args.to,
                out_dir: args.out,
                transcript_dir: args.transcript_dir,
                run_id: args.run_id,
                settings,
            };
            let backend = spec.settings.build_backend()?;
            let summary = run_batch(&spec, backend).await?;
            let c = &summary.manifest.counts;
            let _ = writeln!(
                stdout,
                "{} of {} tasks completed ({} invalid, {} failed, {} with extraction fallback); results in {}",
                c.completed,
                c.total,
                c.invalid,
                c.failed,
                c.fallback_used,
                spec.out_dir.display()
            );
            for note in &summary.manifest.notes {
                let _ = writeln!(stderr, "note: {note}");
            }
            Ok(summary.exit_code())
        }
        Command::Analyze(args) => {
            let spec = AnalyzeSpec {
                dual_run: args.dual_run,
                baseline_run: args.baseline_run,
                metric: args.metric,
                scores: args.scores,
                out: args.out,
            };
            let (report, out) = analyze_to_dir(&spec)?;
            let _ = write!(stdout, "{}", render_report(&report));
            let _ = writeln!(stderr, "wrote {}", out.join(ANALYSIS_JSON).display());
            Ok(EXIT_OK)
        }
    }
}

/// Runs one task in the configured mode, writing its transcript to
/// `<transcript_dir>/<task id>.jsonl` when a directory is given.
pub async fn translate(
    task: TranslationTask,
    settings: &Settings,
    backend: Arc<dyn Backend>,
    transcript_dir: Option<&Path>,
) -> Result<Result<PipelineResult, RunError>, CliError> {
    let templates = Arc::new(settings.load_templates()?);
    let pipeline = Pipeline::new(backend, settings.run.clone())
        .map_err(|e| CliError::Invalid(e.to_string()))?
        .with_templates(templates);
    let mut rec = Recorder::for_task(&task);
    if let Some(dir) = transcript_dir {
        rec = rec.with_sink(Arc::new(JsonlStore::open(dir)?));
    }
    Ok(pipeline.run_mode(task, settings.mode, rec).await)
}

fn report_translation(outcome: Result<PipelineResult, RunError>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match outcome {
        Ok(r) => {
            let _ = writeln!(stdout, "{}", r.final_translation);
            if r.fallback_used {
                let _ = writeln!(
                    stderr,
                    "warning: extraction output was not parseable; printed the latest draft"
                );
                EXIT_PARSE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.error);
            exit_code_for(&e.error)
        }
    }
}
