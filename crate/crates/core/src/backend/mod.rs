//! Chat-completion backends.
//!
//! [`Backend`] is the one seam between the engine and a model. Two
//! implementations ship: [`HttpBackend`] speaks the OpenAI-compatible
//! `/chat/completions` wire format with retries, and [`ScriptedBackend`]
//! replays canned responses for tests and fixtures. [`Limited`] caps the
//! number of in-flight calls for any backend.

mod http;
mod limit;
mod retry;
mod scripted;

use std::ops::AddAssign;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::prompts::MessageSequence;
use crate::stage::Stage;

pub use http::{HttpBackend, HttpConfig, DEFAULT_BASE_URL};
pub use limit::Limited;
pub use retry::{retry_with_policy, RetryPolicy};
pub use scripted::{Matcher, ScriptError, ScriptedBackend, ScriptedBuilder, ScriptedRule};

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: MessageSequence,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub stop: Vec<String>,
    /// Which stage issued the call. Never sent over the wire; scripted
    /// backends match on it.
    pub stage: Option<Stage>,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: MessageSequence, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature,
            max_output_tokens: None,
            stop: Vec::new(),
            stage: None,
        }
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be a finite value >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == Some(0) {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.completion_tokens += rhs.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    /// May be empty; an empty reply is still a successful call.
    pub content: String,
    pub usage: Usage,
    pub latency: Duration,
    /// Number of attempts it took, including the successful one.
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429) after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempts")]
    Server { status: u16, attempts: u32 },
    #[error("request rejected with HTTP {status}: {body}")]
    BadRequest { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Script(#[from] ScriptError),
}

impl BackendError {
    /// Whether another attempt could succeed.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            BackendError::Transport(_) | BackendError::RateLimited { .. } | BackendError::Server { .. }
        )
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;

    fn name(&self) -> &str {
        "backend"
    }
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for Arc<B> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request).await
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for Box<B> {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request).await
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}
