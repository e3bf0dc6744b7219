//! Parsers for the assessment agent's two output shapes, plus the splitter
//! that separates a reflection into analysis and suggestions.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

const FINAL_KEY: &str = "final_translation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    Continue,
}

/// Outcome of a judgment call. `False` from the model means the source and
/// its back-translation agree, so the loop has converged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum JudgmentResult {
    Converged,
    Continue { explanation: Option<String> },
}

impl JudgmentResult {
    pub fn verdict(&self) -> Verdict {
        match self {
            JudgmentResult::Converged => Verdict::Converged,
            JudgmentResult::Continue { .. } => Verdict::Continue,
        }
    }

    pub fn explanation(&self) -> Option<&str> {
        match self {
            JudgmentResult::Converged => None,
            JudgmentResult::Continue { explanation } => explanation.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("judgment output starts with neither 'True' nor 'False'")]
pub struct UnparseableJudgment {
    pub raw: String,
}

const EXPLANATION_LEAD: &[char] = &[
    '\'', '"', '`', '*', '.', ',', ':', ';', '-', '–', '—', '!', ')', ']',
];

/// Classifies a judgment reply by its leading word.
///
/// Leading quotes, punctuation and whitespace are skipped, then the first
/// run of letters is compared case-insensitively against `false` and
/// `true`. Whatever follows a `true` becomes the explanation.
pub fn parse_judgment(raw: &str) -> Result<JudgmentResult, UnparseableJudgment> {
    let body = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
    let end = body
        .char_indices()
        .find(|(_, c)| !c.is_alphabetic())
        .map_or(body.len(), |(i, _)| i);
    let (token, rest) = body.split_at(end);
    match token.to_lowercase().as_str() {
        "false" => Ok(JudgmentResult::Converged),
        "true" => {
            let explanation = rest
                .trim_start_matches(|c: char| c.is_whitespace() || EXPLANATION_LEAD.contains(&c))
                .trim_end();
            Ok(JudgmentResult::Continue {
                explanation: (!explanation.is_empty()).then(|| explanation.to_string()),
            })
        }
        _ => Err(UnparseableJudgment {
            raw: raw.to_string(),
        }),
    }
}

/// Fail-open variant used by the pipeline: an unparseable reply continues
/// the loop with the whole reply as explanation and yields a warning.
pub fn parse_judgment_fail_open(raw: &str) -> (JudgmentResult, Option<String>) {
    match parse_judgment(raw) {
        Ok(result) => (result, None),
        Err(_) => {
            let explanation = raw.trim();
            (
                JudgmentResult::Continue {
                    explanation: (!explanation.is_empty()).then(|| explanation.to_string()),
                },
                Some("unparseable judgment treated as Continue".to_string()),
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    StrictObject,
    LenientQuotes,
    FencedBlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedTranslation {
    pub final_translation: String,
    pub parse_mode: ParseMode,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no `final_translation` value found in extraction output")]
pub struct ExtractionFailure {
    pub raw: String,
}

/// Pulls `final_translation` out of an extraction reply.
///
/// Tiers, first success wins:
/// 1. a well-formed JSON object holding the key, either the whole reply or
///    an object starting outside any code fence;
/// 2. the text outside code fences read leniently, accepting single-quoted
///    keys and values like `{'final_translation': '...'}`;
/// 3. an object starting inside a code fence, or a fence body read
///    leniently.
///
/// Blank values never count as a success.
pub fn parse_final_translation(raw: &str) -> Result<ExtractedTranslation, ExtractionFailure> {
    let found = |final_translation: String, parse_mode| ExtractedTranslation {
        final_translation,
        parse_mode,
    };

    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(raw.trim()) {
        if let Some(v) = value_of(&map) {
            return Ok(found(v, ParseMode::StrictObject));
        }
    }

    // Objects are located in the raw text so that a value which itself
    // contains ``` is not cut apart by fence splitting.
    let (outside_obj, fenced_obj) = locate_objects(raw);
    if let Some(v) = outside_obj {
        return Ok(found(v, ParseMode::StrictObject));
    }
    let (outside, fenced) = split_fences(raw);
    if let Some(v) = lenient(&outside) {
        return Ok(found(v, ParseMode::LenientQuotes));
    }
    if let Some(v) = fenced_obj {
        return Ok(found(v, ParseMode::FencedBlock));
    }
    for block in fenced {
        if let Some(v) = lenient(strip_info_string(block)) {
            return Ok(found(v, ParseMode::FencedBlock));
        }
    }
    Err(ExtractionFailure {
        raw: raw.to_string(),
    })
}

fn value_of(map: &Map<String, Value>) -> Option<String> {
    match map.get(FINAL_KEY) {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.clone()),
        _ => None,
    }
}

/// First usable object starting outside any ``` fence, and first one
/// starting inside a fence.
fn locate_objects(text: &str) -> (Option<String>, Option<String>) {
    let mut fenced = None;
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if let Some(v) = value_of(&map) {
                if text[..i].matches("```").count().is_multiple_of(2) {
                    return (Some(v), None);
                }
                fenced.get_or_insert(v);
            }
        }
    }
    (None, fenced)
}

/// Returns the text outside ``` fences (joined by newlines) and the fence
/// bodies. An unclosed fence runs to the end of the text.
fn split_fences(raw: &str) -> (String, Vec<&str>) {
    let mut outside = Vec::new();
    let mut fenced = Vec::new();
    for (i, part) in raw.split("```").enumerate() {
        if i % 2 == 0 {
            outside.push(part);
        } else {
            fenced.push(part);
        }
    }
    (outside.join("\n"), fenced)
}

/// Drops a language tag such as `json` from the first line of a fence body.
fn strip_info_string(block: &str) -> &str {
    match block.split_once('\n') {
        Some((first, rest))
            if !first.trim().is_empty()
                && first.trim().chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') =>
        {
            rest
        }
        _ => block,
    }
}

fn lenient(text: &str) -> Option<String> {
    text.match_indices(FINAL_KEY)
        .find_map(|(i, _)| lenient_at(text, i))
}

fn lenient_at(text: &str, key_start: usize) -> Option<String> {
    let key_quote = text[..key_start].chars().next_back()?;
    if key_quote != '\'' && key_quote != '"' {
        return None;
    }
    let mut rest = text[key_start + FINAL_KEY.len()..].strip_prefix(key_quote)?;
    rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let quote = rest.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let body = &rest[1..];

    let mut value = String::new();
    let mut chars = body.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => match chars.next()?.1 {
                'n' => value.push('\n'),
                't' => value.push('\t'),
                'r' => value.push('\r'),
                other => value.push(other),
            },
            c if c == quote => {
                let after = body[i + 1..].trim_start();
                if after.is_empty() || after.starts_with('}') || after.starts_with(',') {
                    return (!value.trim().is_empty()).then_some(value);
                }
                value.push(c);
            }
            c => value.push(c),
        }
    }
    None
}

/// Analysis results and translation suggestions from one reflection reply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionOutput {
    pub analysis: String,
    pub suggestions: String,
}

static SUGGESTION_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^[\s#*>\-\d.)]*(?:translation\s+suggestions?|revision\s+suggestions?|suggestions?(?:\s+for\s+revision)?|ts)\s*(?:\([^)]*\))?\s*\**\s*(?:[:：]|$)\s*\**\s*",
    )
    .unwrap()
});

static ANALYSIS_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^[\s#*>\-\d.)]*(?:analysis\s+results?|analysis|ar)\s*(?:\([^)]*\))?\s*\**\s*(?:[:：]|$)\s*\**\s*",
    )
    .unwrap()
});

/// Splits a reflection reply at its suggestions heading.
///
/// Without a recognisable heading the whole reply is the analysis and the
/// suggestions are empty.
pub fn split_reflection(raw: &str) -> ReflectionOutput {
    let lines: Vec<&str> = raw.lines().collect();
    let heading = lines
        .iter()
        .position(|line| SUGGESTION_HEADING.is_match(line));

    let (analysis_lines, suggestions) = match heading {
        Some(at) => {
            let first = SUGGESTION_HEADING.replace(lines[at], "");
            let mut tail = vec![first.as_ref()];
            tail.extend(&lines[at + 1..]);
            (&lines[..at], tail.join("\n").trim().to_string())
        }
        None => (&lines[..], String::new()),
    };

    let analysis = analysis_lines.join("\n");
    let analysis = analysis.trim();
    let analysis = ANALYSIS_HEADING.replace(analysis, "");
    ReflectionOutput {
        analysis: analysis.trim().to_string(),
        suggestions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judgment_examples() {
        assert_eq!(parse_judgment("False").unwrap(), JudgmentResult::Converged);
        assert_eq!(
            parse_judgment("True. The back-translation omits the idiom.").unwrap(),
            JudgmentResult::Continue {
                explanation: Some("The back-translation omits the idiom.".into())
            }
        );
        assert_eq!(parse_judgment("'false'  ").unwrap(), JudgmentResult::Converged);
        assert!(parse_judgment("Maybe").is_err());
    }

    #[test]
    fn judgment_variants() {
        assert_eq!(parse_judgment("**TRUE**").unwrap().explanation(), None);
        assert_eq!(parse_judgment("\"False\". They match.").unwrap(), JudgmentResult::Converged);
        assert_eq!(
            parse_judgment("True: word order differs").unwrap().explanation(),
            Some("word order differs")
        );
        assert!(parse_judgment("Falsehood").is_err());
        assert!(parse_judgment("").is_err());
        assert!(parse_judgment("   ...  ").is_err());
    }

    #[test]
    fn fail_open_keeps_raw_text() {
        let (result, warning) = parse_judgment_fail_open("  I think so ");
        assert_eq!(result.explanation(), Some("I think so"));
        assert!(warning.is_some());
        let (result, warning) = parse_judgment_fail_open("False");
        assert_eq!(result, JudgmentResult::Converged);
        assert!(warning.is_none());
    }

    #[test]
    fn extraction_tiers() {
        let strict = parse_final_translation(r#"{"final_translation": "Hello world"}"#).unwrap();
        assert_eq!(strict.final_translation, "Hello world");
        assert_eq!(strict.parse_mode, ParseMode::StrictObject);

        let lenient = parse_final_translation("{'final_translation': 'Hello world'}").unwrap();
        assert_eq!(lenient.final_translation, "Hello world");
        assert_eq!(lenient.parse_mode, ParseMode::LenientQuotes);

        let fenced =
            parse_final_translation("Sure! ```{\"final_translation\": \"Bonjour\"}```").unwrap();
        assert_eq!(fenced.final_translation, "Bonjour");
        assert_eq!(fenced.parse_mode, ParseMode::FencedBlock);

        assert!(parse_final_translation("I cannot help").is_err());
    }

    #[test]
    fn extraction_edge_cases() {
        let prose = parse_final_translation(
            "Here you go: {\"final_translation\": \"Guten Tag\"} hope it helps",
        )
        .unwrap();
        assert_eq!(prose.final_translation, "Guten Tag");
        assert_eq!(prose.parse_mode, ParseMode::StrictObject);

        let apostrophe = parse_final_translation("{'final_translation': 'It's fine'}").unwrap();
        assert_eq!(apostrophe.final_translation, "It's fine");

        let tagged = parse_final_translation("```json\n{'final_translation': 'Hola'}\n```").unwrap();
        assert_eq!(tagged.final_translation, "Hola");
        assert_eq!(tagged.parse_mode, ParseMode::FencedBlock);

        let ticks = parse_final_translation("Sure: {\"final_translation\": \"use ```code```\"} ok").unwrap();
        assert_eq!(ticks.final_translation, "use ```code```");
        assert_eq!(ticks.parse_mode, ParseMode::StrictObject);

        assert!(parse_final_translation(r#"{"final_translation": ""}"#).is_err());
        assert!(parse_final_translation(r#"{"final_translation": 3}"#).is_err());
        assert!(parse_final_translation("{'final_translation': 'unterminated").is_err());
    }

    #[test]
    fn splits_reflection_headings() {
        let out = split_reflection(
            "Analysis Results: The idiom was lost.\nTranslation Suggestions: Keep the idiom.",
        );
        assert_eq!(out.analysis, "The idiom was lost.");
        assert_eq!(out.suggestions, "Keep the idiom.");

        let md = split_reflection(
            "**Analysis Results (AR):**\n1. Tense differs.\n\n**Translation Suggestions (TS):**\n1. Use past tense.\n2. Keep names.",
        );
        assert_eq!(md.analysis, "1. Tense differs.");
        assert_eq!(md.suggestions, "1. Use past tense.\n2. Keep names.");

        let merged = split_reflection("The sentences differ in tone; make it formal.");
        assert_eq!(merged.analysis, "The sentences differ in tone; make it formal.");
        assert_eq!(merged.suggestions, "");
    }
}
