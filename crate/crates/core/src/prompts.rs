//! Prompt templates for every stage and their rendering into chat messages.
//!
//! Each template has an instruction part, sent as the system message, and an
//! input part, sent as a single user message. Input texts are wrapped in
//! `"""` delimiter lines and are never escaped.
//!
//! Placeholders use `{name}` syntax. Substitution is a single left-to-right
//! pass, so placeholder-looking text inside user data is copied verbatim.
//! A `{` that does not open a well-formed `{identifier}` is literal, which
//! is what lets the extraction exemplar `{'final_translation': ''}` appear
//! in a template unescaped. `{{` and `}}` render as single braces.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stage::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Ordered chat messages. Never empty and always holds a user message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Message>", into = "Vec<Message>")]
pub struct MessageSequence(Vec<Message>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("a message sequence needs at least one user message")]
pub struct NoUserMessage;

impl MessageSequence {
    pub fn new(messages: Vec<Message>) -> Result<Self, NoUserMessage> {
        if messages.iter().any(|m| m.role == Role::User) {
            Ok(Self(messages))
        } else {
            Err(NoUserMessage)
        }
    }

    /// A sequence made of a single user message.
    pub fn user(content: impl Into<String>) -> Self {
        Self(vec![Message {
            role: Role::User,
            content: content.into(),
        }])
    }

    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    pub fn system(&self) -> Option<&str> {
        self.0
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    /// Content of the last user message.
    pub fn last_user(&self) -> &str {
        self.0
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.0.iter().any(|m| m.content.contains(needle))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Message> {
        self.0.iter()
    }
}

impl TryFrom<Vec<Message>> for MessageSequence {
    type Error = NoUserMessage;

    fn try_from(messages: Vec<Message>) -> Result<Self, Self::Error> {
        Self::new(messages)
    }
}

impl From<MessageSequence> for Vec<Message> {
    fn from(seq: MessageSequence) -> Self {
        seq.0
    }
}

/// Plain-text dump used by the golden files and by `Display`.
impl fmt::Display for MessageSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "### {}", m.role.as_str())?;
            writeln!(f, "{}", m.content)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("{stage} template: placeholder `{{{name}}}` is not bound")]
    UnboundPlaceholder { stage: Stage, name: String },
    #[error("{stage} template: input `{field}` is empty")]
    EmptyInput { stage: Stage, field: &'static str },
    #[error("{stage} template rendered an empty user message")]
    EmptyUserMessage { stage: Stage },
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("reading template file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing template file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("template file: {0}")]
    UnknownStage(#[from] crate::stage::UnknownStage),
    #[error("{stage} template uses `{{{name}}}`, which that stage never binds (allowed: {allowed})")]
    UnknownPlaceholder {
        stage: Stage,
        name: String,
        allowed: String,
    },
    #[error("{stage} template has an empty user part")]
    EmptyUser { stage: Stage },
}

/// Instruction and input text for one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    stage: Stage,
    system: String,
    user: String,
}

impl PromptTemplate {
    pub fn new(
        stage: Stage,
        system: impl Into<String>,
        user: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let template = Self {
            stage,
            system: system.into(),
            user: user.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn user(&self) -> &str {
        &self.user
    }

    fn validate(&self) -> Result<(), TemplateError> {
        if self.user.trim().is_empty() {
            return Err(TemplateError::EmptyUser { stage: self.stage });
        }
        let allowed = allowed_placeholders(self.stage);
        for name in placeholders(&self.system).chain(placeholders(&self.user)) {
            if !allowed.contains(&name) {
                return Err(TemplateError::UnknownPlaceholder {
                    stage: self.stage,
                    name: name.to_string(),
                    allowed: allowed.join(", "),
                });
            }
        }
        Ok(())
    }

    fn render(&self, bindings: &[Binding<'_>]) -> Result<MessageSequence, RenderError> {
        let system = substitute(&self.system, bindings).map_err(|name| {
            RenderError::UnboundPlaceholder {
                stage: self.stage,
                name,
            }
        })?;
        let user = substitute(&self.user, bindings).map_err(|name| {
            RenderError::UnboundPlaceholder {
                stage: self.stage,
                name,
            }
        })?;
        if user.is_empty() {
            return Err(RenderError::EmptyUserMessage { stage: self.stage });
        }
        let mut messages = Vec::with_capacity(2);
        if !system.is_empty() {
            messages.push(Message {
                role: Role::System,
                content: system,
            });
        }
        messages.push(Message {
            role: Role::User,
            content: user,
        });
        Ok(MessageSequence(messages))
    }
}

fn allowed_placeholders(stage: Stage) -> &'static [&'static str] {
    match stage {
        Stage::Draft => &["source_lang", "target_lang", "x"],
        Stage::Back => &["source_lang", "target_lang", "x", "y"],
        Stage::Judge => &["source_lang", "x", "x_prime"],
        Stage::Extract => &["y"],
        Stage::Reflect => &["x_prime", "x"],
        Stage::Revise => &["source_lang", "target_lang", "AR", "TS", "x"],
    }
}

struct Binding<'a> {
    name: &'static str,
    value: &'a str,
    /// An empty value for a required binding counts as unbound.
    required: bool,
}

const fn req<'a>(name: &'static str, value: &'a str) -> Binding<'a> {
    Binding {
        name,
        value,
        required: true,
    }
}

const fn opt<'a>(name: &'static str, value: &'a str) -> Binding<'a> {
    Binding {
        name,
        value,
        required: false,
    }
}

/// Parses a `{identifier}` placeholder at the start of `rest` (which begins
/// just after the opening brace). Returns the name and its byte length
/// including the closing brace.
fn placeholder_at(rest: &str) -> Option<(&str, usize)> {
    let mut chars = rest.char_indices();
    match chars.next() {
        Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return None,
    }
    for (i, c) in chars {
        if c == '}' {
            return Some((&rest[..i], i + 1));
        }
        if !(c.is_ascii_alphanumeric() || c == '_') {
            return None;
        }
    }
    None
}

fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        let after = &rest[pos + 1..];
        if let Some(stripped) = after.strip_prefix('{') {
            rest = stripped;
            continue;
        }
        match placeholder_at(after) {
            Some((name, len)) => {
                out.push(name);
                rest = &after[len..];
            }
            None => rest = after,
        }
    }
    out.into_iter()
}

/// Single-pass substitution. On failure returns the unbound name.
fn substitute(template: &str, bindings: &[Binding<'_>]) -> Result<String, String> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    loop {
        let Some(pos) = rest.find(['{', '}']) else {
            out.push_str(rest);
            return Ok(out);
        };
        out.push_str(&rest[..pos]);
        let brace = &rest[pos..pos + 1];
        let after = &rest[pos + 1..];
        if brace == "}" {
            out.push('}');
            rest = after.strip_prefix('}').unwrap_or(after);
            continue;
        }
        if let Some(stripped) = after.strip_prefix('{') {
            out.push('{');
            rest = stripped;
            continue;
        }
        match placeholder_at(after) {
            Some((name, len)) => {
                let bound = bindings
                    .iter()
                    .find(|b| b.name == name)
                    .filter(|b| !(b.required && b.value.trim().is_empty()));
                match bound {
                    Some(b) => out.push_str(b.value),
                    None => return Err(name.to_string()),
                }
                rest = &after[len..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
}

const DRAFT_SYSTEM: &str = "Translate the following text from {source_lang} to {target_lang}:";
const DRAFT_USER: &str = "Input Text:\n\"\"\"\n{x}\n\"\"\"";

const JUDGE_SYSTEM: &str = "If you are a {source_lang} linguist, Determine whether the following two \
sentences provided by user convey the same meaning and style, including subtleties. If so, give \
'False' response without any explanation, otherwise give 'True' response and explain the reason.";
const JUDGE_USER: &str = "Source Sentence:\n\"\"\"\n{x}\n\"\"\"\n\nBack Translation Output:\n\"\"\"\n{x_prime}\n\"\"\"";

const EXTRACT_SYSTEM: &str = "Pattern Extraction: Please summarize the input information, you need \
to extract the final translation result from the paragraph. Now, please output your answer in JSON \
format, as follows: {'final_translation': ''}. Please strictly follow the JSON format and do not \
output irrelevant content.";
const EXTRACT_USER: &str = "Target Sentence:\n\"\"\"\n{y}\n\"\"\"";

const REFLECT_SYSTEM: &str = "Compare the two sentences provided by the user. It aims to analyze the \
disparities between them in meaning, style, and subtleties, first provide analytical results, and \
then suggest how to revise them to make the two sentences consistent.";
const REFLECT_USER: &str =
    "Back-Translated Sentence:\n\"\"\"\n{x_prime}\n\"\"\"\n\nSource Sentence:\n\"\"\"\n{x}\n\"\"\"";

const REVISE_SYSTEM: &str = "Translate the following text from {source_lang} to {target_lang}:";
const REVISE_USER: &str = "Analysis Results:\n\"\"\"\n{AR}\n\"\"\"\n\nTranslation Suggestions:\n\"\"\"\n{TS}\n\"\"\"\n\nSource Sentence:\n\"\"\"\n{x}\n\"\"\"";

fn builtin(stage: Stage) -> PromptTemplate {
    let (system, user) = match stage {
        Stage::Draft | Stage::Back => (DRAFT_SYSTEM, DRAFT_USER),
        Stage::Judge => (JUDGE_SYSTEM, JUDGE_USER),
        Stage::Extract => (EXTRACT_SYSTEM, EXTRACT_USER),
        Stage::Reflect => (REFLECT_SYSTEM, REFLECT_USER),
        Stage::Revise => (REVISE_SYSTEM, REVISE_USER),
    };
    PromptTemplate {
        stage,
        system: system.to_string(),
        user: user.to_string(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateOverride {
    system: Option<String>,
    user: Option<String>,
}

/// The six templates used by one engine. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: HashMap<Stage, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: Stage::ALL.into_iter().map(|s| (s, builtin(s))).collect(),
        }
    }
}

impl TemplateSet {
    /// Builds a set from a TOML document keyed by stage name:
    ///
    /// ```toml
    /// [judge]
    /// system = "You are a careful {source_lang} editor. Answer 'True' or 'False'."
    /// ```
    ///
    /// Missing stages and missing `system`/`user` parts keep the built-in
    /// text. A `back` template that is not given follows `draft`, so
    /// overriding the draft instruction also changes back-translation.
    pub fn from_toml_str(doc: &str) -> Result<Self, TemplateError> {
        let raw: BTreeMap<String, TemplateOverride> = toml::from_str(doc)?;
        let mut overrides = HashMap::new();
        for (key, value) in raw {
            overrides.insert(key.parse::<Stage>()?, value);
        }

        let mut templates = HashMap::new();
        for stage in Stage::ALL {
            let fallback = match (stage, overrides.get(&stage)) {
                (Stage::Back, None) => Stage::Draft,
                _ => stage,
            };
            let base = builtin(fallback);
            let ov = overrides.get(&fallback);
            let system = ov.and_then(|o| o.system.clone()).unwrap_or(base.system);
            let user = ov.and_then(|o| o.user.clone()).unwrap_or(base.user);
            templates.insert(stage, PromptTemplate::new(stage, system, user)?);
        }
        Ok(Self { templates })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }

    pub fn render_draft(&self, x: &str, ls: &str, lt: &str) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Draft, "x", x)?;
        self.get(Stage::Draft)
            .render(&[req("x", x), req("source_lang", ls), req("target_lang", lt)])
    }

    /// Back-translation of `y` from `lt` back into `ls`.
    ///
    /// The text being translated binds to both `{x}` and `{y}`, so the draft
    /// template can be reused as-is.
    pub fn render_back(&self, y: &str, lt: &str, ls: &str) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Back, "y", y)?;
        self.get(Stage::Back).render(&[
            req("x", y),
            req("y", y),
            req("source_lang", lt),
            req("target_lang", ls),
        ])
    }

    pub fn render_judgment(
        &self,
        x: &str,
        x_prime: &str,
        ls: &str,
    ) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Judge, "x", x)?;
        nonempty(Stage::Judge, "x_prime", x_prime)?;
        self.get(Stage::Judge)
            .render(&[req("x", x), req("x_prime", x_prime), req("source_lang", ls)])
    }

    pub fn render_extraction(&self, y: &str) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Extract, "y", y)?;
        self.get(Stage::Extract).render(&[req("y", y)])
    }

    pub fn render_reflection(&self, x_prime: &str, x: &str) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Reflect, "x_prime", x_prime)?;
        nonempty(Stage::Reflect, "x", x)?;
        self.get(Stage::Reflect)
            .render(&[req("x_prime", x_prime), req("x", x)])
    }

    /// `analysis` and `suggestions` may be empty; their labeled sections
    /// are then rendered empty.
    pub fn render_revision(
        &self,
        analysis: &str,
        suggestions: &str,
        x: &str,
        ls: &str,
        lt: &str,
    ) -> Result<MessageSequence, RenderError> {
        nonempty(Stage::Revise, "x", x)?;
        self.get(Stage::Revise).render(&[
            opt("AR", analysis),
            opt("TS", suggestions),
            req("x", x),
            req("source_lang", ls),
            req("target_lang", lt),
        ])
    }
}

fn nonempty(stage: Stage, field: &'static str, value: &str) -> Result<(), RenderError> {
    if value.trim().is_empty() {
        Err(RenderError::EmptyInput { stage, field })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t() -> TemplateSet {
        TemplateSet::default()
    }

    #[test]
    fn draft_carries_languages_and_source() {
        let seq = t().render_draft("你好", "Chinese", "English").unwrap();
        assert_eq!(
            seq.system().unwrap(),
            "Translate the following text from Chinese to English:"
        );
        assert!(seq.last_user().contains("你好"));
        assert_eq!(seq.messages().len(), 2);
    }

    #[test]
    fn draft_renderer_is_policy_free() {
        let seq = t().render_draft("a", "X", "X").unwrap();
        assert!(seq.contains("from X to X"));
    }

    #[test]
    fn user_data_is_not_expanded() {
        let seq = t().render_draft("keep {x} and {source_lang}", "A", "B").unwrap();
        assert_eq!(seq.last_user().matches("{x}").count(), 1);
        assert!(seq.last_user().contains("keep {x} and {source_lang}"));
    }

    #[test]
    fn empty_language_is_unbound() {
        let err = t().render_draft("x", "", "English").unwrap_err();
        assert_eq!(
            err,
            RenderError::UnboundPlaceholder {
                stage: Stage::Draft,
                name: "source_lang".into()
            }
        );
    }

    #[test]
    fn back_reuses_draft_template() {
        let ts = t();
        let back = ts.render_back("Hello", "English", "Chinese").unwrap();
        assert_eq!(back, ts.render_draft("Hello", "English", "Chinese").unwrap());
        assert!(back.contains("Translate the following text from English to Chinese"));
        assert!(back.contains("Hello"));
        assert!(matches!(
            ts.render_back("", "English", "Chinese"),
            Err(RenderError::EmptyInput { .. })
        ));
    }

    #[test]
    fn judgment_protocol_text() {
        let ts = t();
        let seq = ts.render_judgment("我很好", "我很好", "Chinese").unwrap();
        assert!(seq.contains(
            "give 'False' response without any explanation, otherwise give 'True' response and explain the reason"
        ));
        assert!(seq.contains("If you are a Chinese linguist"));
        assert!(ts.render_judgment("x", " ", "Chinese").is_err());
    }

    #[test]
    fn extraction_exemplar_survives() {
        let ts = t();
        let seq = ts.render_extraction("The cat sat.").unwrap();
        assert!(seq.contains("{'final_translation': ''}"));
        assert!(seq.contains("Please strictly follow the JSON format"));
        let braces = ts.render_extraction("a {b} {'c': 1} }{").unwrap();
        assert!(braces.last_user().contains("a {b} {'c': 1} }{"));
        assert!(ts.render_extraction("").is_err());
    }

    #[test]
    fn reflection_orders_back_translation_first() {
        let seq = t().render_reflection("BACK", "SOURCE").unwrap();
        let user = seq.last_user();
        assert!(user.find("BACK").unwrap() < user.find("SOURCE").unwrap());
        assert!(seq.contains("first provide analytical results, and then suggest how to revise"));
        assert!(t().render_reflection("same", "same").is_ok());
        assert!(t().render_reflection("x'", "").is_err());
    }

    #[test]
    fn revision_orders_inputs() {
        let seq = t()
            .render_revision("ANALYSIS", "SUGGEST", "SOURCE", "Chinese", "English")
            .unwrap();
        let user = seq.last_user();
        let a = user.find("ANALYSIS").unwrap();
        let s = user.find("SUGGEST").unwrap();
        let x = user.find("SOURCE").unwrap();
        assert!(a < s && s < x);
        let empty = t().render_revision("", "", "SOURCE", "Chinese", "English").unwrap();
        assert!(empty.last_user().contains("Analysis Results:\n\"\"\"\n\n\"\"\""));
        assert!(t().render_revision("a", "b", "", "Chinese", "English").is_err());
    }

    #[test]
    fn overrides_fall_back_per_part() {
        let ts = TemplateSet::from_toml_str(
            "[draft]\nsystem = \"Render {source_lang} as {target_lang}.\"\n\n[judgment]\nuser = \"A: {x}\\nB: {x_prime}\"\n",
        )
        .unwrap();
        let draft = ts.render_draft("hi", "English", "German").unwrap();
        assert_eq!(draft.system().unwrap(), "Render English as German.");
        assert_eq!(draft.last_user(), "Input Text:\n\"\"\"\nhi\n\"\"\"");
        // back follows the overridden draft
        let back = ts.render_back("hallo", "German", "English").unwrap();
        assert_eq!(back.system().unwrap(), "Render German as English.");
        let judge = ts.render_judgment("a", "b", "English").unwrap();
        assert_eq!(judge.last_user(), "A: a\nB: b");
        assert!(judge.system().unwrap().contains("English linguist"));
    }

    #[test]
    fn override_rejects_foreign_placeholders() {
        let err = TemplateSet::from_toml_str("[extract]\nuser = \"{x}\"\n").unwrap_err();
        assert!(matches!(err, TemplateError::UnknownPlaceholder { .. }), "{err}");
        let err = TemplateSet::from_toml_str("[review]\nuser = \"{x}\"\n").unwrap_err();
        assert!(matches!(err, TemplateError::UnknownStage(_)));
    }

    #[test]
    fn doubled_braces_escape() {
        let tpl = PromptTemplate::new(Stage::Extract, "{{y}} means {y}", "{y}").unwrap();
        let seq = tpl.render(&[req("y", "v")]).unwrap();
        assert_eq!(seq.system().unwrap(), "{y} means v");
    }

    #[test]
    fn message_sequence_requires_user() {
        assert!(MessageSequence::new(vec![Message {
            role: Role::System,
            content: "s".into()
        }])
        .is_err());
        let json = r#"[{"role":"system","content":"s"}]"#;
        assert!(serde_json::from_str::<MessageSequence>(json).is_err());
    }
}
