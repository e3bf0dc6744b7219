//! Single-pass translation: one draft, one extraction call.

use std::error::Error;
use std::sync::Arc;

use dual_reflect::{run_zero_shot, RunConfig, ScriptedBackend, Stage, TranslationTask};

pub fn run_example() -> Result<String, Box<dyn Error>> {
    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["The weather is nice today."])
        .stage(Stage::Extract, [r#"{"final_translation": "The weather is nice today."}"#])
        .build()?;

    let task = TranslationTask::new("weather", "今天天气很好。", "Chinese", "English");
    let rt = tokio::runtime::Runtime::new()?;
    let result = rt
        .block_on(run_zero_shot(task, RunConfig::default(), Arc::new(backend)))
        .map_err(|e| e.error)?;

    for entry in &result.transcript {
        println!("{:>8}  {}", entry.stage.as_str(), entry.raw_output);
    }
    println!("final: {}", result.final_translation);
    Ok(result.final_translation)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
