//! Runs the same corpus twice, once with the reflective loop and extraction
//! after every round, once zero-shot, then relates the back-translation
//! disparity of each segment to how much the loop improved it.

use std::error::Error;
use std::path::Path;

use dual_reflect::cli::{analyze_to_dir, render_report, run_batch, AnalysisReport, AnalyzeSpec, BackendKind, BatchSpec, MetricChoice, Settings};
use dual_reflect::Mode;

fn batch(out: &Path, mode: Mode) -> Result<(), Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut settings = Settings::default();
    settings.mode = mode;
    settings.backend = BackendKind::Scripted;
    settings.script = Some(fixtures.join("batch10.rules"));
    settings.run.force_extraction_each_iteration = mode == Mode::DualReflect;

    let spec = BatchSpec {
        input: fixtures.join("batch10.tsv"),
        source_lang: "German".into(),
        target_lang: "English".into(),
        out_dir: out.to_path_buf(),
        transcript_dir: None,
        run_id: None,
        settings,
    };
    let backend = spec.settings.build_backend()?;
    tokio::runtime::Runtime::new()?.block_on(run_batch(&spec, backend))?;
    Ok(())
}

pub fn run_example() -> Result<AnalysisReport, Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let (dual, base) = (dir.path().join("dual"), dir.path().join("zero-shot"));
    batch(&dual, Mode::DualReflect)?;
    batch(&base, Mode::ZeroShot)?;

    let spec = AnalyzeSpec {
        dual_run: dual,
        baseline_run: base,
        metric: MetricChoice::Chrf,
        scores: None,
        out: None,
    };
    let (report, written) = analyze_to_dir(&spec)?;
    print!("{}", render_report(&report));
    println!("wrote {}", written.display());
    Ok(report)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
