use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::backend::{Backend, HttpBackend, HttpConfig, RetryPolicy, ScriptedBackend, DEFAULT_BASE_URL};
use crate::pipeline::{Mode, RunConfig};
use crate::prompts::TemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

/// Optional settings file (TOML). Every key may be omitted.
///
/// ```toml
/// backend = "http"
/// model = "gpt-4o-mini"
/// max_iterations = 3
/// base_url = "http://localhost:8000/v1"
/// concurrency = 8
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub script: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub concurrency: Option<usize>,
    pub base_url: Option<String>,
    pub timeout_secs: Option<f64>,
    pub max_attempts: Option<u32>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_iterations: Option<u32>,
    pub force_extraction_each_iteration: Option<bool>,
    pub metric: Option<String>,
    pub max_output_tokens: Option<u32>,
    pub stop: Option<Vec<String>>,
    pub strict_extraction: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }
}

/// Values given on the command line. `None` means "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub script: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub concurrency: Option<usize>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_iterations: Option<u32>,
    pub force_extraction_each_iteration: bool,
    pub strict_extraction: bool,
    pub max_output_tokens: Option<u32>,
}

/// The effective configuration of a CLI run. Serialized into run
/// manifests; the API key itself is never written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub mode: Mode,
    pub backend: BackendKind,
    pub script: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub concurrency: usize,
    pub base_url: String,
    pub timeout_secs: f64,
    pub max_attempts: u32,
    pub api_key_set: bool,
    pub run: RunConfig,
    #[serde(skip)]
    api_key: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        let http = HttpConfig::default();
        Self {
            mode: Mode::DualReflect,
            backend: BackendKind::Http,
            script: None,
            templates: None,
            concurrency: 4,
            base_url: DEFAULT_BASE_URL.to_string(),
            timeout_secs: http.timeout.as_secs_f64(),
            max_attempts: http.retry.max_attempts,
            api_key_set: false,
            run: RunConfig::default(),
            api_key: None,
        }
    }
}

impl Settings {
    /// Applies layers in increasing priority: defaults, settings file,
    /// environment, flags.
    pub fn resolve(
        file: Option<&FileConfig>,
        env: &dyn Fn(&str) -> Option<String>,
        flags: &Overrides,
    ) -> Result<Self, CliError> {
        let mut s = Settings::default();

        if let Some(f) = file {
            set(&mut s.backend, f.backend);
            s.script = f.script.clone().or(s.script);
            s.templates = f.templates.clone().or(s.templates);
            set(&mut s.mode, f.mode);
            set(&mut s.concurrency, f.concurrency);
            set(&mut s.base_url, f.base_url.clone());
            set(&mut s.timeout_secs, f.timeout_secs);
            set(&mut s.max_attempts, f.max_attempts);
            set(&mut s.run.model, f.model.clone());
            set(&mut s.run.temperature, f.temperature);
            set(&mut s.run.max_iterations, f.max_iterations);
            set(&mut s.run.force_extraction_each_iteration, f.force_extraction_each_iteration);
            set(&mut s.run.metric, f.metric.clone());
            s.run.max_output_tokens = f.max_output_tokens.or(s.run.max_output_tokens);
            set(&mut s.run.stop, f.stop.clone());
            set(&mut s.run.strict_extraction, f.strict_extraction);
        }

        let env = |key: &str| env(key).filter(|v| !v.trim().is_empty());
        set(&mut s.base_url, env("DR_BASE_URL"));
        set(&mut s.run.model, env("DR_MODEL"));
        if let Some(v) = env("DR_TIMEOUT_SECS") {
            s.timeout_secs = parse_env("DR_TIMEOUT_SECS", &v)?;
        }
        if let Some(v) = env("DR_MAX_ATTEMPTS") {
            s.max_attempts = parse_env("DR_MAX_ATTEMPTS", &v)?;
        }
        s.api_key = env("DR_API_KEY");
        s.api_key_set = s.api_key.is_some();

        set(&mut s.backend, flags.backend);
        s.script = flags.script.clone().or(s.script);
        s.templates = flags.templates.clone().or(s.templates);
        set(&mut s.mode, flags.mode);
        set(&mut s.concurrency, flags.concurrency);
        set(&mut s.run.model, flags.model.clone());
        set(&mut s.run.temperature, flags.temperature);
        set(&mut s.run.max_iterations, flags.max_iterations);
        s.run.max_output_tokens = flags.max_output_tokens.or(s.run.max_output_tokens);
        s.run.force_extraction_each_iteration |= flags.force_extraction_each_iteration;
        s.run.strict_extraction |= flags.strict_extraction;
        s.run.backend_id = match s.backend {
            BackendKind::Http => "http".into(),
            BackendKind::Scripted => "scripted".into(),
        };

        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.run
            .validate()
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        if self.concurrency == 0 {
            return Err(CliError::Invalid("concurrency must be at least 1".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(CliError::Invalid("timeout must be positive".into()));
        }
        if self.max_attempts == 0 {
            return Err(CliError::Invalid("max attempts must be at least 1".into()));
        }
        if self.backend == BackendKind::Scripted && self.script.is_none() {
            return Err(CliError::Invalid("--backend scripted needs --script".into()));
        }
        Ok(())
    }

    pub fn http_config(&self) -> HttpConfig {
        HttpConfig {
            base_url: self.base_url.clone(),
            api_key: self.api_key.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            retry: RetryPolicy {
                max_attempts: self.max_attempts,
                ..RetryPolicy::default()
            },
        }
    }

    pub fn build_backend(&self) -> Result<Arc<dyn Backend>, CliError> {
        match self.backend {
            BackendKind::Http => HttpBackend::new(self.http_config())
                .map(|b| Arc::new(b) as Arc<dyn Backend>)
                .map_err(|e| CliError::Invalid(e.to_string())),
            BackendKind::Scripted => {
                let path = self.script.as_deref().expect("checked in validate");
                ScriptedBackend::from_file(path)
                    .map(|b| Arc::new(b) as Arc<dyn Backend>)
                    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
            }
        }
    }

    pub fn load_templates(&self) -> Result<TemplateSet, CliError> {
        match &self.templates {
            None => Ok(TemplateSet::default()),
            Some(path) => {
                TemplateSet::from_file(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
            }
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("{key}: cannot parse `{value}`")))
}
