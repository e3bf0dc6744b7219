use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::batch::{load_manifest, load_outcomes, RunManifest, TaskOutcome, TaskStatus, TRANSCRIPT_DIR};
use super::CliError;
use crate::metrics::{chrf, delta_c, delta_d, pearson, Chrf, DisparityRecord, ScoreFile, ScoreKind, CHRF_ID, EXTERNAL_ID};
use crate::pipeline::Mode;
use crate::stage::Stage;
use crate::transcript::{load_run_file, TranscriptEntry};

pub const ANALYSIS_JSON: &str = "analysis.json";
pub const ANALYSIS_TXT: &str = "analysis.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    /// Built-in chrF computed from the run directories.
    Chrf,
    /// Per-segment scores read from `--scores`.
    External,
}

#[derive(Debug, Clone)]
pub struct AnalyzeSpec {
    pub dual_run: PathBuf,
    pub baseline_run: PathBuf,
    pub metric: MetricChoice,
    pub scores: Option<PathBuf>,
    /// Where `analysis.json` and `analysis.txt` go. Defaults to
    /// `<dual_run>/analysis`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTask {
    pub task_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u32,
    pub mean_score: f64,
    pub tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub dual_run: PathBuf,
    pub baseline_run: PathBuf,
    pub metric: String,
    pub records: Vec<DisparityRecord>,
    pub pearson_r: Option<f64>,
    #[serde(default)]
    pub pearson_note: Option<String>,
    pub mean_delta_c: Option<f64>,
    pub iteration_curve: Option<Vec<CurvePoint>>,
    pub skipped: Vec<SkippedTask>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Computes ΔD, ΔC, their correlation and, for forced-extraction runs, the
/// per-round score curve. Reads run directories and score files only.
pub fn analyze(spec: &AnalyzeSpec) -> Result<AnalysisReport, CliError> {
    let dual = load_manifest(&spec.dual_run)?;
    let base = load_manifest(&spec.baseline_run)?;
    if dual.mode != Mode::DualReflect {
        return Err(CliError::Invalid(format!(
            "{} is a {} run, expected dual-reflect",
            spec.dual_run.display(),
            dual.mode.as_str()
        )));
    }
    if base.mode != Mode::ZeroShot {
        return Err(CliError::Invalid(format!(
            "{} is a {} run, expected zero-shot",
            spec.baseline_run.display(),
            base.mode.as_str()
        )));
    }
    let dual_rows = load_outcomes(&spec.dual_run)?;
    let base_rows = load_outcomes(&spec.baseline_run)?;
    check_alignment(&dual_rows, &base_rows)?;

    let scores = match (spec.metric, &spec.scores) {
        (MetricChoice::External, Some(path)) => {
            Some(ScoreFile::load(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?)
        }
        (MetricChoice::External, None) => {
            return Err(CliError::Invalid("--metric external needs --scores".into()))
        }
        (MetricChoice::Chrf, Some(_)) => {
            return Err(CliError::Invalid("--scores is only read with --metric external".into()))
        }
        (MetricChoice::Chrf, None) => None,
    };
    let transcripts = transcript_dir(&spec.dual_run, &dual);

    let mut report = AnalysisReport {
        dual_run: spec.dual_run.clone(),
        baseline_run: spec.baseline_run.clone(),
        metric: match spec.metric {
            MetricChoice::Chrf => CHRF_ID.into(),
            MetricChoice::External => EXTERNAL_ID.into(),
        },
        records: Vec::new(),
        pearson_r: None,
        pearson_note: None,
        mean_delta_c: None,
        iteration_curve: None,
        skipped: Vec::new(),
        notes: Vec::new(),
    };
    let force = dual.settings.run.force_extraction_each_iteration;
    let max_iter = dual.settings.run.max_iterations;
    let mut curve: BTreeMap<u32, Vec<f64>> = BTreeMap::new();

    for (d, b) in dual_rows.iter().zip(&base_rows) {
        let skip = |reason: &str| SkippedTask {
            task_id: d.task_id.clone(),
            reason: reason.to_string(),
        };
        if d.status != TaskStatus::Completed {
            report.skipped.push(skip("not completed in the dual-reflect run"));
            continue;
        }
        if b.status != TaskStatus::Completed {
            report.skipped.push(skip("not completed in the baseline run"));
            continue;
        }
        let id = &d.task_id;
        let record = match &scores {
            Some(scores) => {
                let bt = scores.require(id, ScoreKind::BackTranslation).map_err(missing)?;
                let ours = scores.require(id, ScoreKind::DualReflect).map_err(missing)?;
                let theirs = scores.require(id, ScoreKind::ZeroShot).map_err(missing)?;
                for k in 1..=max_iter {
                    if let Some(v) = scores.get(id, ScoreKind::Iteration(k)) {
                        curve.entry(k).or_default().push(v);
                    }
                }
                DisparityRecord {
                    task_id: id.clone(),
                    delta_d: 100.0 - bt.value,
                    delta_c: delta_c(&ours, &theirs).map_err(metric_err)?,
                    iteration_observed: 1,
                }
            }
            None => {
                let reference = d.reference.as_deref().ok_or_else(|| {
                    CliError::Invalid(format!("missing scores: task `{id}` has no reference for the built-in metric"))
                })?;
                let entries = load_run_file(transcripts.join(format!("{id}.jsonl")), id)?.entries;
                let Some(back) = first_back_translation(&entries) else {
                    report.skipped.push(skip("no back-translation in transcript"));
                    continue;
                };
                let ours = chrf(d.final_translation.as_deref().unwrap_or_default(), reference).map_err(metric_err)?;
                let theirs = chrf(b.final_translation.as_deref().unwrap_or_default(), reference).map_err(metric_err)?;
                if force {
                    for (k, text) in finals_by_round(&entries, max_iter) {
                        curve.entry(k).or_default().push(chrf(&text, reference).map_err(metric_err)?.value);
                    }
                }
                DisparityRecord {
                    task_id: id.clone(),
                    delta_d: delta_d(&d.source, back.raw_output.trim(), &Chrf).map_err(metric_err)?,
                    delta_c: delta_c(&ours, &theirs).map_err(metric_err)?,
                    iteration_observed: back.iteration,
                }
            }
        };
        report.records.push(record);
    }

    match pearson(&report.records) {
        Ok(r) => report.pearson_r = Some(r),
        Err(e) => report.pearson_note = Some(e.to_string()),
    }
    if !report.records.is_empty() {
        let sum: f64 = report.records.iter().map(|r| r.delta_c).sum();
        report.mean_delta_c = Some(sum / report.records.len() as f64);
    }
    if !curve.is_empty() {
        report.iteration_curve = Some(
            curve
                .into_iter()
                .map(|(iteration, v)| CurvePoint {
                    iteration,
                    mean_score: v.iter().sum::<f64>() / v.len() as f64,
                    tasks: v.len(),
                })
                .collect(),
        );
    } else if scores.is_none() && !force {
        report
            .notes
            .push("dual-reflect run did not force extraction each round; no per-iteration curve".into());
    }
    Ok(report)
}

/// Runs [`analyze`] and writes `analysis.json` and `analysis.txt`.
pub fn analyze_to_dir(spec: &AnalyzeSpec) -> Result<(AnalysisReport, PathBuf), CliError> {
    let report = analyze(spec)?;
    let out = spec.out.clone().unwrap_or_else(|| spec.dual_run.join("analysis"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let json = out.join(ANALYSIS_JSON);
    std::fs::write(&json, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| CliError::io(&json, e))?;
    let txt = out.join(ANALYSIS_TXT);
    std::fs::write(&txt, render_report(&report)).map_err(|e| CliError::io(&txt, e))?;
    Ok((report, out))
}

fn missing(e: crate::metrics::ScoreFileError) -> CliError {
    CliError::Invalid(format!("missing scores: {e}"))
}

fn metric_err(e: crate::metrics::MetricError) -> CliError {
    CliError::Invalid(e.to_string())
}

fn check_alignment(dual: &[TaskOutcome], base: &[TaskOutcome]) -> Result<(), CliError> {
    for (i, (d, b)) in dual.iter().zip(base).enumerate() {
        if d.task_id != b.task_id {
            return Err(CliError::Invalid(format!(
                "task id mismatch at row {}: dual-reflect run has `{}`, baseline has `{}`",
                i + 1,
                d.task_id,
                b.task_id
            )));
        }
        if d.source != b.source {
            return Err(CliError::Invalid(format!(
                "corpus mismatch at task `{}`: source texts differ",
                d.task_id
            )));
        }
    }
    if dual.len() != base.len() {
        let (longer, which) = if dual.len() > base.len() {
            (&dual[base.len()], "baseline")
        } else {
            (&base[dual.len()], "dual-reflect run")
        };
        return Err(CliError::Invalid(format!(
            "task id mismatch: `{}` is missing from the {which}",
            longer.task_id
        )));
    }
    Ok(())
}

fn transcript_dir(run_dir: &Path, manifest: &RunManifest) -> PathBuf {
    if manifest.transcript_dir.is_dir() {
        manifest.transcript_dir.clone()
    } else {
        run_dir.join(TRANSCRIPT_DIR)
    }
}

fn first_back_translation(entries: &[TranscriptEntry]) -> Option<&TranscriptEntry> {
    entries.iter().find(|e| e.stage == Stage::Back && e.error.is_none())
}

/// The translation the run would have returned after each round, from the
/// extraction entries. Rounds after an early stop repeat the last value.
pub fn finals_by_round(entries: &[TranscriptEntry], max_iterations: u32) -> Vec<(u32, String)> {
    let extracts: Vec<(u32, &str)> = entries
        .iter()
        .filter(|e| e.stage == Stage::Extract && e.error.is_none())
        .filter_map(|e| Some((e.iteration, e.parsed_summary.as_deref()?)))
        .collect();
    let mut out = Vec::new();
    for k in 1..=max_iterations {
        if let Some((_, text)) = extracts.iter().rev().find(|(i, _)| *i <= k) {
            out.push((k, text.to_string()));
        }
    }
    out
}

pub fn render_report(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dual-reflect run: {}", r.dual_run.display());
    let _ = writeln!(s, "baseline run:     {}", r.baseline_run.display());
    let _ = writeln!(s, "metric:           {}", r.metric);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12} {:>9} {:>9}", "task", "ΔD", "ΔC");
    for rec in &r.records {
        let _ = writeln!(s, "{:<12} {:>9.3} {:>+9.3}", rec.task_id, rec.delta_d, rec.delta_c);
    }
    let _ = writeln!(s);
    match (r.pearson_r, &r.pearson_note) {
        (Some(v), _) => {
            let _ = writeln!(s, "pearson r(ΔD, ΔC) = {v:.4} over {} tasks", r.records.len());
        }
        (None, Some(note)) => {
            let _ = writeln!(s, "pearson r(ΔD, ΔC) unavailable: {note}");
        }
        (None, None) => {}
    }
    if let Some(m) = r.mean_delta_c {
        let _ = writeln!(s, "mean ΔC = {m:+.3}");
    }
    if let Some(curve) = &r.iteration_curve {
        let _ = writeln!(s);
        let _ = writeln!(s, "per-iteration {}:", r.metric);
        for p in curve {
            let _ = writeln!(s, "  iteration {}: {:.3} ({} tasks)", p.iteration, p.mean_score, p.tasks);
        }
    }
    if !r.skipped.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "skipped:");
        for t in &r.skipped {
            let _ = writeln!(s, "  {}: {}", t.task_id, t.reason);
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
