//! Drives the state machine by hand, one backend call per step, and
//! prints the state after each stage.

use std::error::Error;
use std::sync::Arc;

use dual_reflect::{Pipeline, Recorder, RunConfig, ScriptedBackend, Stage, TranslationTask};
use dual_reflect::Mode;

pub fn run_example() -> Result<Vec<Stage>, Box<dyn Error>> {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["Good morning"])
        .stage(Stage::Back, ["Guten Morgen"])
        .stage(Stage::Judge, ["False"])
        .stage(Stage::Extract, [r#"{"final_translation": "Good morning"}"#])
        .build()?;
    let pipeline = Pipeline::new(Arc::new(backend), RunConfig::default())?;

    let task = TranslationTask::new("greeting", "Guten Morgen", "German", "English");
    let mut rec = Recorder::for_task(&task);
    let mut state = pipeline.start(task, Mode::DualReflect)?;
    let mut seen = Vec::new();

    let rt = tokio::runtime::Runtime::new()?;
    while let Some(stage) = state.next_stage() {
        state = rt.block_on(pipeline.step(state, &mut rec))?;
        seen.push(stage);
        println!(
            "{:<8} round={} draft={:?} back={:?}",
            stage.as_str(),
            state.iteration,
            state.draft.as_deref().unwrap_or("-"),
            state.back_translation.as_deref().unwrap_or("-"),
        );
    }
    println!("final: {:?} via {:?}", state.final_translation, state.termination);
    println!("{} transcript entries", rec.entries().len());
    Ok(seen)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
