//! Overrides stage templates from TOML and shows the rendered prompts the
//! model actually received.

use std::error::Error;
use std::sync::Arc;

use dual_reflect::prompts::TemplateSet;
use dual_reflect::{Pipeline, Recorder, RunConfig, ScriptedBackend, Stage, TranslationTask};

const TEMPLATES: &str = r#"
[draft]
system = "You translate {source_lang} product copy into concise {target_lang}."
user = "{x}"

[judge]
system = "Reply 'False' when the two {source_lang} texts mean the same, otherwise 'True' and a reason."
"#;

pub fn run_example() -> Result<String, Box<dyn Error>> {
    let templates = TemplateSet::from_toml_str(TEMPLATES)?;
    let draft = templates.render_draft("Wasserdichte Jacke", "German", "English")?;
    for message in draft.iter() {
        println!("[{}] {}", message.role.as_str(), message.content);
    }

    let backend = ScriptedBackend::builder()
        .stage(Stage::Draft, ["Waterproof jacket"])
        .stage(Stage::Back, ["Wasserdichte Jacke"])
        .stage(Stage::Judge, ["False"])
        .stage(Stage::Extract, [r#"{"final_translation": "Waterproof jacket"}"#])
        .build()?;
    let pipeline = Pipeline::new(Arc::new(backend), RunConfig::default())?.with_templates(Arc::new(templates));

    let task = TranslationTask::new("sku-1", "Wasserdichte Jacke", "German", "English");
    let rec = Recorder::for_task(&task);
    let rt = tokio::runtime::Runtime::new()?;
    let result = rt.block_on(pipeline.run(task, rec)).map_err(|e| e.error)?;

    let judge = result
        .transcript
        .iter()
        .find(|e| e.stage == Stage::Judge)
        .ok_or("no judgment recorded")?;
    println!("judge system prompt: {}", judge.rendered_prompt.system().unwrap_or(""));
    Ok(judge.rendered_prompt.system().unwrap_or("").to_string())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
