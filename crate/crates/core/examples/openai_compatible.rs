//! Translates one sentence against a real OpenAI-compatible endpoint.
//!
//! Reads `DR_API_KEY` and optionally `DR_BASE_URL` and `DR_MODEL`. Without
//! an API key it prints a note and does nothing.
//!
//! ```sh
//! DR_API_KEY=sk-... cargo run --example openai_compatible
//! ```

use std::error::Error;
use std::sync::Arc;

use dual_reflect::{run_pipeline, HttpBackend, HttpConfig, RunConfig, TranslationTask};

pub fn run_example() -> Result<Option<String>, Box<dyn Error>> {
    let config = HttpConfig::from_env();
    if config.api_key.is_none() {
        println!("DR_API_KEY is not set; skipping the live call");
        return Ok(None);
    }
    let backend = HttpBackend::new(config)?;
    let mut run = RunConfig::default();
    if let Ok(model) = std::env::var("DR_MODEL") {
        run.model = model;
    }

    let task = TranslationTask::new("live", "他们吃了苹果。", "Chinese", "English");
    let rt = tokio::runtime::Runtime::new()?;
    let result = rt
        .block_on(run_pipeline(task, run, Arc::new(backend)))
        .map_err(|e| e.error)?;
    for entry in &result.transcript {
        println!("--- {} (round {})\n{}", entry.stage.as_str(), entry.iteration, entry.raw_output);
    }
    println!("final: {}", result.final_translation);
    Ok(Some(result.final_translation))
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
