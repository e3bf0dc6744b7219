//! The reply parsers on their own: judgment verdicts, final-translation
//! extraction in its three tiers, and reflection splitting.

use std::error::Error;

use dual_reflect::extraction::{
    parse_final_translation, parse_judgment, parse_judgment_fail_open, split_reflection, ParseMode,
};

pub fn run_example() -> Result<Vec<ParseMode>, Box<dyn Error>> {
    for raw in ["False", "**True** - the tense differs.", "'false'."] {
        let judgment = parse_judgment(raw)?;
        println!("{raw:<32} -> {:?} {:?}", judgment.verdict(), judgment.explanation());
    }
    let (judgment, warning) = parse_judgment_fail_open("Hard to say.");
    println!("{:<32} -> {:?} ({})", "Hard to say.", judgment.verdict(), warning.unwrap_or_default());

    let replies = [
        r#"Sure! {"final_translation": "Bonjour le monde"}"#,
        "{'final_translation': 'Bonjour le monde'}",
        "```json\n{\"final_translation\": \"Bonjour le monde\"}\n```",
    ];
    let mut modes = Vec::new();
    for raw in replies {
        let parsed = parse_final_translation(raw)?;
        println!("{:?}: {}", parsed.parse_mode, parsed.final_translation);
        modes.push(parsed.parse_mode);
    }
    if let Err(e) = parse_final_translation("I would rather not.") {
        println!("unparseable: {e}");
    }

    let reflection = split_reflection(
        "Analysis Results: the word 'bank' was read as a river bank.\n\
         Translation Suggestions: use the financial sense.",
    );
    println!("analysis:    {}", reflection.analysis);
    println!("suggestions: {}", reflection.suggestions);
    Ok(modes)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
