use std::time::{Duration, Instant};

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{retry_with_policy, Backend, BackendError, ChatRequest, ChatResponse, RetryPolicy, Usage};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Everything before `/chat/completions`, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Per-attempt timeout.
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }
}

impl HttpConfig {
    /// Reads `DR_BASE_URL`, `DR_API_KEY`, `DR_TIMEOUT_SECS` and
    /// `DR_MAX_ATTEMPTS`, keeping defaults for anything unset.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(url) = std::env::var("DR_BASE_URL") {
            config.base_url = url;
        }
        config.api_key = std::env::var("DR_API_KEY").ok().filter(|k| !k.is_empty());
        if let Some(secs) = env_parse::<f64>("DR_TIMEOUT_SECS") {
            config.timeout = Duration::from_secs_f64(secs);
        }
        if let Some(n) = env_parse::<u32>("DR_MAX_ATTEMPTS") {
            config.retry.max_attempts = n.max(1);
        }
        config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

fn env_parse<T: std::str::FromStr>(key: &str) -> Option<T> {
    std::env::var(key).ok()?.trim().parse().ok()
}

/// Client for OpenAI-compatible chat-completion servers.
///
/// Retries HTTP 429, 5xx, timeouts and connection failures under the
/// configured [`RetryPolicy`]; any other 4xx fails immediately. Message
/// contents are never logged.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    config: HttpConfig,
    endpoint: String,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: config.endpoint(),
            client,
            config,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    async fn attempt(&self, body: &WireRequest<'_>) -> Result<(String, Usage), BackendError> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        tracing::debug!(status = status.as_u16(), model = body.model, "chat completion response");

        if status == StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::RateLimited { attempts: 0 });
        }
        if status.is_server_error() {
            return Err(BackendError::Server {
                status: status.as_u16(),
                attempts: 0,
            });
        }
        let text = resp
            .text()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::BadRequest {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        parse_wire_response(&text)
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let body = WireRequest::from(request);
        let started = Instant::now();
        let ((content, usage), attempts) =
            retry_with_policy(&self.config.retry, |_| self.attempt(&body)).await?;
        Ok(ChatResponse {
            content,
            usage,
            latency: started.elapsed(),
            attempts,
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    stop: &'a [String],
}

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

impl<'a> From<&'a ChatRequest> for WireRequest<'a> {
    fn from(req: &'a ChatRequest) -> Self {
        Self {
            model: &req.model,
            messages: req
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.as_str(),
                    content: &m.content,
                })
                .collect(),
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
            stop: &req.stop,
        }
    }
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireReply,
}

#[derive(Debug, Deserialize)]
struct WireReply {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_wire_response(body: &str) -> Result<(String, Usage), BackendError> {
    let parsed: WireResponse =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::MalformedResponse("no choices in response".into()))?;
    let content = choice
        .message
        .content
        .ok_or_else(|| BackendError::MalformedResponse("choice has no message content".into()))?;
    let usage = parsed
        .usage
        .map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        })
        .unwrap_or_default();
    Ok((content, usage))
}
