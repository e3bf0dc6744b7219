//! Persists a run to JSONL, reloads it, and checks that a second run with
//! the same script produces the same canonical transcript.

use std::error::Error;
use std::sync::Arc;

use dual_reflect::transcript::{canonical_transcript, JsonlStore};
use dual_reflect::{Pipeline, Recorder, RunConfig, ScriptedBackend, Stage, TranslationTask};

fn backend() -> Result<ScriptedBackend, Box<dyn Error>> {
    Ok(ScriptedBackend::builder()
        .stage(Stage::Draft, ["Thank you very much"])
        .stage(Stage::Back, ["Muchas gracias"])
        .stage(Stage::Judge, ["False"])
        .stage(Stage::Extract, [r#"{"final_translation": "Thank you very much"}"#])
        .build()?)
}

pub fn run_example() -> Result<bool, Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let rt = tokio::runtime::Runtime::new()?;

    // The run id is part of the canonical form, so each replay goes into
    // its own directory under the same id.
    let mut runs = Vec::new();
    for attempt in ["first", "second"] {
        let store = Arc::new(JsonlStore::open(dir.path().join(attempt))?);
        let pipeline = Pipeline::new(Arc::new(backend()?), RunConfig::default())?;
        let task = TranslationTask::new("thanks", "Muchas gracias", "Spanish", "English");
        let rec = Recorder::new("thanks-run", "thanks").with_sink(store.clone());
        rt.block_on(pipeline.run(task, rec)).map_err(|e| e.error)?;
        store.close("thanks-run");
        println!("{}", store.path_for("thanks-run").display());
        runs.push(store.load_run("thanks-run")?);
    }

    for entry in &runs[0].entries {
        println!("#{} {:<8} round {} -> {}", entry.seq, entry.stage.as_str(), entry.iteration, entry.raw_output);
    }
    let same = canonical_transcript(&runs[0].entries) == canonical_transcript(&runs[1].entries);
    println!("canonical transcripts identical: {same}");
    Ok(same)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
