//! Runs a ten-line German corpus through the loop with scripted replies,
//! then reads back the aligned files written for external scorers.

use std::error::Error;
use std::path::Path;

use dual_reflect::cli::{run_batch, BackendKind, BatchSpec, BatchSummary, Settings};
use dual_reflect::metrics::read_export;

pub fn run_example() -> Result<BatchSummary, Box<dyn Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = tempfile::tempdir()?;

    let mut settings = Settings::default();
    settings.backend = BackendKind::Scripted;
    settings.script = Some(fixtures.join("batch10.rules"));
    settings.concurrency = 3;

    let spec = BatchSpec {
        input: fixtures.join("batch10.tsv"),
        source_lang: "German".into(),
        target_lang: "English".into(),
        out_dir: out.path().to_path_buf(),
        transcript_dir: None,
        run_id: None,
        settings,
    };
    let backend = spec.settings.build_backend()?;
    let rt = tokio::runtime::Runtime::new()?;
    let summary = rt.block_on(run_batch(&spec, backend))?;

    let counts = &summary.manifest.counts;
    println!("{} of {} completed, {} fell back", counts.completed, counts.total, counts.fallback_used);
    for outcome in &summary.outcomes {
        println!(
            "{} rounds={} {:<40} {}",
            outcome.task_id,
            outcome.iterations_used,
            outcome.source,
            outcome.final_translation.as_deref().unwrap_or("-"),
        );
    }

    let export = summary.manifest.export.as_ref().ok_or("nothing exported")?;
    let batch = read_export(out.path(), &export.run_id)?;
    println!(
        "exported {} segments to {} (reference file: {})",
        batch.hypotheses.len(),
        export.hypothesis.display(),
        batch.references.is_some(),
    );
    Ok(summary)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
