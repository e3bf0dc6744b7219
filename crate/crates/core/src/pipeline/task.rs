use serde::{Deserialize, Serialize};

/// One source sentence to translate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationTask {
    pub id: String,
    pub source_text: String,
    pub source_lang: String,
    pub target_lang: String,
    /// Gold translation. Only the metrics ever read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task id is empty")]
    EmptyId,
    #[error("task `{0}`: source text is empty")]
    EmptySource(String),
    #[error("task `{0}`: source and target language must both be named")]
    MissingLanguage(String),
    #[error("task `{id}`: source and target language are both `{lang}`")]
    SameLanguage { id: String, lang: String },
}

impl TranslationTask {
    pub fn new(
        id: impl Into<String>,
        source_text: impl Into<String>,
        source_lang: impl Into<String>,
        target_lang: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            source_text: source_text.into(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.id.trim().is_empty() {
            return Err(TaskError::EmptyId);
        }
        if self.source_text.trim().is_empty() {
            return Err(TaskError::EmptySource(self.id.clone()));
        }
        let (ls, lt) = (self.source_lang.trim(), self.target_lang.trim());
        if ls.is_empty() || lt.is_empty() {
            return Err(TaskError::MissingLanguage(self.id.clone()));
        }
        if ls.eq_ignore_ascii_case(lt) {
            return Err(TaskError::SameLanguage {
                id: self.id.clone(),
                lang: ls.to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Draft, then the back-translation/judgment/reflection/revision loop.
    DualReflect,
    /// Draft only, followed by extraction. The baseline for improvement
    /// measurements.
    ZeroShot,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DualReflect => "dual-reflect",
            Mode::ZeroShot => "zero-shot",
        }
    }
}

/// Knobs for one run. Defaults: temperature 0 and three judgment rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub backend_id: String,
    pub model: String,
    pub temperature: f64,
    /// Maximum number of judgment rounds. At least 1.
    pub max_iterations: u32,
    /// Extract a final translation after every revision too, not only when
    /// the loop ends. Used to trace quality per round.
    pub force_extraction_each_iteration: bool,
    /// Built-in similarity metric used by the analysis tools.
    pub metric: String,
    pub max_output_tokens: Option<u32>,
    pub stop: Vec<String>,
    /// Fail the run when extraction output cannot be parsed instead of
    /// falling back to the latest draft.
    pub strict_extraction: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend_id: "http".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            max_iterations: 3,
            force_extraction_each_iteration: false,
            metric: "chrf".into(),
            max_output_tokens: None,
            stop: Vec::new(),
            strict_extraction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error("temperature must be a finite value >= 0, got {0}")]
    Temperature(f64),
    #[error("max_output_tokens must be positive")]
    ZeroOutputTokens,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.max_output_tokens == Some(0) {
            return Err(ConfigError::ZeroOutputTokens);
        }
        Ok(())
    }

    /// Most backend calls a run can make.
    pub fn call_bound(&self, mode: Mode) -> u32 {
        match mode {
            Mode::ZeroShot => 2,
            Mode::DualReflect if self.force_extraction_each_iteration => 2 + 5 * self.max_iterations,
            Mode::DualReflect => 2 + 4 * self.max_iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_invariants() {
        let ok = TranslationTask::new("t", "你好", "Chinese", "English");
        assert!(ok.validate().is_ok());
        assert_eq!(
            TranslationTask::new("t", "  \n", "Chinese", "English").validate(),
            Err(TaskError::EmptySource("t".into()))
        );
        assert!(matches!(
            TranslationTask::new("t", "a", "English", "english").validate(),
            Err(TaskError::SameLanguage { .. })
        ));
        assert!(TranslationTask::new("t", "a", "", "English").validate().is_err());
        assert!(TranslationTask::new(" ", "a", "German", "English").validate().is_err());
    }

    #[test]
    fn config_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_iterations, 3);
        assert!(c.validate().is_ok());
        assert_eq!(c.call_bound(Mode::DualReflect), 14);
        let bad = RunConfig {
            max_iterations: 0,
            ..RunConfig::default()
        };
        assert_eq!(bad.validate(), Err(ConfigError::ZeroIterations));
        let bad = RunConfig {
            temperature: -0.5,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_from_partial_toml() {
        let c: RunConfig = toml::from_str("model = \"gpt-4\"\nmax_iterations = 5\n").unwrap();
        assert_eq!(c.model, "gpt-4");
        assert_eq!(c.max_iterations, 5);
        assert_eq!(c.temperature, 0.0);
    }
}
