//! Deterministic backend driven by match rules and response queues.
//!
//! Script files are TOML:
//!
//! ```toml
//! [[rule]]
//! name = "draft"          # optional, used in error messages
//! match = "stage"         # "stage" | "contains" | "exact"
//! pattern = "draft"
//! responses = ["Hello"]
//!
//! [[rule]]
//! match = "contains"
//! pattern = "Hello"
//! stage = "back"          # optional extra stage filter
//! responses = ["你好"]
//! ```
//!
//! For each call the first rule (in file order) that matches and still has
//! responses left pops its next response. A call that only matches drained
//! rules fails with [`ScriptError::Exhausted`] naming the first of them.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;

use super::{Backend, BackendError, ChatRequest, ChatResponse, Usage};
use crate::stage::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Pattern equals the request's last user message.
    #[serde(alias = "exact_prompt")]
    Exact,
    /// Pattern occurs in any message of the request.
    #[serde(alias = "contains_substring")]
    Contains,
    /// Pattern names the stage that issued the request.
    #[serde(alias = "stage_label")]
    Stage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedRule {
    pub name: Option<String>,
    pub matcher: Matcher,
    pub pattern: String,
    pub stage: Option<Stage>,
    pub responses: VecDeque<String>,
}

impl ScriptedRule {
    pub fn new(
        matcher: Matcher,
        pattern: impl Into<String>,
        responses: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        Self {
            name: None,
            matcher,
            pattern: pattern.into(),
            stage: None,
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn on_stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    fn label(&self, index: usize) -> String {
        match &self.name {
            Some(name) => format!("rule `{name}` (#{})", index + 1),
            None => format!("rule #{} ({:?} `{}`)", index + 1, self.matcher, self.pattern),
        }
    }

    fn matches(&self, request: &ChatRequest) -> bool {
        if self.stage.is_some() && self.stage != request.stage {
            return false;
        }
        match self.matcher {
            Matcher::Exact => request.messages.last_user() == self.pattern,
            Matcher::Contains => request.messages.contains(&self.pattern),
            Matcher::Stage => request
                .stage
                .is_some_and(|s| self.pattern.parse::<Stage>().is_ok_and(|p| p == s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScriptError {
    #[error("reading script: {0}")]
    Io(String),
    #[error("parsing script: {0}")]
    Parse(String),
    #[error("script has no rules")]
    NoRules,
    #[error("{rule} has an empty response queue")]
    EmptyQueue { rule: String },
    #[error("{rule}: `{pattern}` is not a stage name")]
    BadStage { rule: String, pattern: String },
    #[error("{rule} is exhausted")]
    Exhausted { rule: String },
    #[error("no script rule matches the {stage} call")]
    NoMatch { stage: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(default)]
    rule: Vec<RuleFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    name: Option<String>,
    #[serde(rename = "match")]
    matcher: Matcher,
    pattern: String,
    stage: Option<String>,
    responses: Vec<String>,
}

/// Replays scripted responses. Safe to share between concurrent runs; the
/// rule queues sit behind one lock so every pop is atomic.
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Mutex<Vec<ScriptedRule>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Result<Self, ScriptError> {
        if rules.is_empty() {
            return Err(ScriptError::NoRules);
        }
        for (i, rule) in rules.iter().enumerate() {
            if rule.responses.is_empty() {
                return Err(ScriptError::EmptyQueue { rule: rule.label(i) });
            }
            if rule.matcher == Matcher::Stage && rule.pattern.parse::<Stage>().is_err() {
                return Err(ScriptError::BadStage {
                    rule: rule.label(i),
                    pattern: rule.pattern.clone(),
                });
            }
        }
        Ok(Self {
            rules: Mutex::new(rules),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn builder() -> ScriptedBuilder {
        ScriptedBuilder::default()
    }

    pub fn from_toml_str(doc: &str) -> Result<Self, ScriptError> {
        let file: ScriptFile = toml::from_str(doc).map_err(|e| ScriptError::Parse(e.to_string()))?;
        let mut rules = Vec::with_capacity(file.rule.len());
        for (i, r) in file.rule.into_iter().enumerate() {
            let stage = match r.stage {
                Some(s) => Some(s.parse::<Stage>().map_err(|_| ScriptError::BadStage {
                    rule: format!("rule #{}", i + 1),
                    pattern: s,
                })?),
                None => None,
            };
            rules.push(ScriptedRule {
                name: r.name,
                matcher: r.matcher,
                pattern: r.pattern,
                stage,
                responses: r.responses.into(),
            });
        }
        Self::new(rules)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let doc = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            ScriptError::Io(format!("{}: {e}", path.as_ref().display()))
        })?;
        Self::from_toml_str(&doc)
    }

    /// Number of `complete` calls served so far, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Responses not yet consumed, across all rules.
    pub fn remaining(&self) -> usize {
        self.rules
            .lock()
            .unwrap()
            .iter()
            .map(|r| r.responses.len())
            .sum()
    }

    fn next_response(&self, request: &ChatRequest) -> Result<String, ScriptError> {
        let mut rules = self.rules.lock().unwrap();
        let mut drained = None;
        for (i, rule) in rules.iter_mut().enumerate() {
            if !rule.matches(request) {
                continue;
            }
            match rule.responses.pop_front() {
                Some(response) => return Ok(response),
                None => {
                    drained.get_or_insert_with(|| rule.label(i));
                }
            }
        }
        Err(match drained {
            Some(rule) => ScriptError::Exhausted { rule },
            None => ScriptError::NoMatch {
                stage: request.stage.map_or("unlabeled".into(), |s| s.to_string()),
            },
        })
    }
}

fn words(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        request.validate()?;
        let content = self.next_response(request)?;
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: request.messages.iter().map(|m| words(&m.content)).sum(),
                completion_tokens: words(&content),
            },
            content,
            latency: Duration::ZERO,
            attempts: 1,
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Fluent construction of scripted backends in code.
#[derive(Debug, Default)]
pub struct ScriptedBuilder {
    rules: Vec<ScriptedRule>,
}

impl ScriptedBuilder {
    pub fn rule(mut self, rule: ScriptedRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn stage(self, stage: Stage, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.rule(ScriptedRule::new(Matcher::Stage, stage.as_str(), responses))
    }

    pub fn contains(
        self,
        pattern: impl Into<String>,
        responses: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.rule(ScriptedRule::new(Matcher::Contains, pattern, responses))
    }

    /// A `contains` rule restricted to one stage.
    pub fn stage_contains(
        self,
        stage: Stage,
        pattern: impl Into<String>,
        responses: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        self.rule(ScriptedRule::new(Matcher::Contains, pattern, responses).on_stage(stage))
    }

    pub fn build(self) -> Result<ScriptedBackend, ScriptError> {
        ScriptedBackend::new(self.rules)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{MessageSequence, TemplateSet};

    fn request(stage: Stage, messages: MessageSequence) -> ChatRequest {
        ChatRequest::new("m", messages, 0.0).with_stage(stage)
    }

    #[tokio::test]
    async fn contains_rule_answers() {
        let backend = ScriptedBackend::builder()
            .contains("Translate the following", ["Hola"])
            .build()
            .unwrap();
        let msgs = TemplateSet::default().render_draft("Hello", "English", "Spanish").unwrap();
        let resp = backend.complete(&request(Stage::Draft, msgs)).await.unwrap();
        assert_eq!(resp.content, "Hola");
        assert_eq!(resp.attempts, 1);
    }

    #[tokio::test]
    async fn exhaustion_names_the_rule() {
        let backend = ScriptedBackend::from_toml_str(
            "[[rule]]\nname = \"judge\"\nmatch = \"stage\"\npattern = \"judge\"\nresponses = [\"True\", \"True\"]\n",
        )
        .unwrap();
        let req = request(Stage::Judge, MessageSequence::user("x"));
        backend.complete(&req).await.unwrap();
        backend.complete(&req).await.unwrap();
        let err = backend.complete(&req).await.unwrap_err();
        assert_eq!(
            err,
            BackendError::Script(ScriptError::Exhausted {
                rule: "rule `judge` (#1)".into()
            })
        );
        assert_eq!(backend.calls(), 3);
    }

    #[tokio::test]
    async fn first_live_match_wins() {
        let backend = ScriptedBackend::builder()
            .stage(Stage::Judge, ["True"])
            .contains("x", ["False", "False"])
            .build()
            .unwrap();
        let req = request(Stage::Judge, MessageSequence::user("x"));
        let got: Vec<String> = [
            backend.complete(&req).await.unwrap().content,
            backend.complete(&req).await.unwrap().content,
        ]
        .into();
        assert_eq!(got, ["True", "False"]);
        assert_eq!(backend.remaining(), 1);
    }

    #[tokio::test]
    async fn exact_and_stage_filter() {
        let backend = ScriptedBackend::builder()
            .rule(ScriptedRule::new(Matcher::Exact, "exact text", ["A"]).on_stage(Stage::Back))
            .build()
            .unwrap();
        let wrong_stage = request(Stage::Draft, MessageSequence::user("exact text"));
        assert!(matches!(
            backend.complete(&wrong_stage).await,
            Err(BackendError::Script(ScriptError::NoMatch { .. }))
        ));
        let ok = request(Stage::Back, MessageSequence::user("exact text"));
        assert_eq!(backend.complete(&ok).await.unwrap().content, "A");
    }

    #[test]
    fn schema_errors() {
        assert_eq!(ScriptedBackend::from_toml_str("").unwrap_err(), ScriptError::NoRules);
        assert!(matches!(
            ScriptedBackend::from_toml_str("[[rule]]\nmatch = \"stage\"\npattern = \"draft\"\nresponses = []\n"),
            Err(ScriptError::EmptyQueue { .. })
        ));
        assert!(matches!(
            ScriptedBackend::from_toml_str("[[rule]]\nmatch = \"stage\"\npattern = \"review\"\nresponses = [\"a\"]\n"),
            Err(ScriptError::BadStage { .. })
        ));
        assert!(matches!(
            ScriptedBackend::from_toml_str("[[rule]]\nmatch = \"regex\"\npattern = \"a\"\nresponses = [\"a\"]\n"),
            Err(ScriptError::Parse(_))
        ));
    }
}
