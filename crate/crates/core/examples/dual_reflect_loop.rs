//! The full loop: the judge spots a mismatch in round one, the model
//! reflects and revises, and round two converges.

use std::error::Error;
use std::sync::Arc;

use dual_reflect::pipeline::stage_word;
use dual_reflect::{run_pipeline, PipelineResult, RunConfig, ScriptedBackend, Stage, TranslationTask};

pub fn run_example() -> Result<PipelineResult, Box<dyn Error>> {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["He kicked the bucket."])
        .stage(Stage::Back, ["他踢了水桶。", "他去世了。"])
        .stage(
            Stage::Judge,
            ["True. The source says he died; the back-translation says he kicked a bucket.", "False"],
        )
        .stage(
            Stage::Reflect,
            ["Analysis Results: the idiom was read literally.\nTranslation Suggestions: say that he passed away."],
        )
        .stage(Stage::Revise, ["He passed away."])
        .stage(Stage::Extract, [r#"{"final_translation": "He passed away."}"#])
        .build()?;

    let task = TranslationTask::new("idiom", "他去世了。", "Chinese", "English");
    let config = RunConfig {
        max_iterations: 3,
        ..RunConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    let result = rt
        .block_on(run_pipeline(task, config, Arc::new(backend)))
        .map_err(|e| e.error)?;

    println!("stages: {}", stage_word(result.stages()));
    println!("rounds: {} ({:?})", result.iterations_used, result.termination_reason);
    println!("tokens: {}", result.usage.total());
    println!("final:  {}", result.final_translation);
    Ok(result)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
