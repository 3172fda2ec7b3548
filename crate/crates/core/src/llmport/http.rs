//! OpenAI-compatible `/chat/completions` client.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Semaphore;

use super::{ChatRequest, CompletionPort, PortError, Usage, UsageCounter};

pub const ENV_ENDPOINT: &str = "TOOLDC_ENDPOINT";
pub const ENV_MODEL: &str = "TOOLDC_MODEL";
pub const ENV_API_KEY_VAR: &str = "TOOLDC_API_KEY_VAR";
pub const DEFAULT_API_KEY_VAR: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL (`http://host:8000/v1`) or the full completions URL.
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_var: String,
    /// Fail before sending anything when the key variable is unset.
    pub require_auth: bool,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub backoff_factor: u32,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            api_key_var: DEFAULT_API_KEY_VAR.into(),
            require_auth: false,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_secs(1),
            backoff_factor: 2,
            max_in_flight: 8,
        }
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    /// Endpoint and key variable from `TOOLDC_ENDPOINT` / `TOOLDC_API_KEY_VAR`.
    pub fn from_env() -> Result<Self, PortError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| PortError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let mut cfg = Self::new(endpoint);
        if let Ok(var) = std::env::var(ENV_API_KEY_VAR) {
            cfg.api_key_var = var;
        }
        Ok(cfg)
    }

    fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct HttpPort {
    cfg: HttpConfig,
    client: reqwest::Client,
    gate: Semaphore,
    usage: UsageCounter,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct TokenUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

enum Attempt {
    Done(String),
    Retryable(String),
    Fatal(PortError),
}

fn excerpt(body: &str) -> String {
    const MAX: usize = 200;
    match body.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &body[..i]),
        None => body.to_string(),
    }
}

impl HttpPort {
    pub fn new(cfg: HttpConfig) -> Result<Self, PortError> {
        if cfg.endpoint.is_empty() {
            return Err(PortError::Config("endpoint URL is empty".into()));
        }
        let client = reqwest::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| PortError::Config(e.to_string()))?;
        Ok(Self {
            gate: Semaphore::new(cfg.max_in_flight.max(1)),
            cfg,
            client,
            usage: UsageCounter::default(),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn body(req: &ChatRequest) -> serde_json::Value {
        json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system},
                {"role": "user", "content": req.user},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        })
    }

    async fn attempt(&self, body: &serde_json::Value, key: Option<&str>) -> Attempt {
        let mut builder = self.client.post(self.cfg.completions_url()).json(body);
        if let Some(key) = key {
            builder = builder.bearer_auth(key);
        }
        let response = match builder.send().await {
            Ok(r) => r,
            Err(e) => return Attempt::Retryable(e.to_string()),
        };
        let status = response.status();
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) => return Attempt::Retryable(e.to_string()),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retryable(format!("HTTP {status}: {}", excerpt(&text)));
        }
        if (status.as_u16() == 401 || status.as_u16() == 403) && key.is_none() {
            return Attempt::Fatal(PortError::AuthMissing(self.cfg.api_key_var.clone()));
        }
        if !status.is_success() {
            return Attempt::Fatal(PortError::Transport(format!(
                "HTTP {status}: {}",
                excerpt(&text)
            )));
        }
        let parsed: CompletionBody = match serde_json::from_str(&text) {
            Ok(b) => b,
            Err(_) => return Attempt::Fatal(PortError::MalformedResponse(excerpt(&text))),
        };
        if let Some(u) = &parsed.usage {
            self.usage
                .record_tokens(u.prompt_tokens, u.completion_tokens);
        }
        match parsed.choices.into_iter().next() {
            Some(Choice {
                message: Message {
                    content: Some(content),
                },
            }) => Attempt::Done(content),
            _ => Attempt::Fatal(PortError::MalformedResponse(excerpt(&text))),
        }
    }
}

#[async_trait]
impl CompletionPort for HttpPort {
    async fn complete(&self, req: &ChatRequest) -> Result<String, PortError> {
        let key = std::env::var(&self.cfg.api_key_var).ok();
        if key.is_none() && self.cfg.require_auth {
            return Err(PortError::AuthMissing(self.cfg.api_key_var.clone()));
        }
        let _permit = self
            .gate
            .acquire()
            .await
            .map_err(|e| PortError::Transport(e.to_string()))?;
        self.usage.record_call();
        let body = Self::body(req);
        let mut backoff = self.cfg.initial_backoff;
        let mut attempt = 0;
        loop {
            match self.attempt(&body, key.as_deref()).await {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retryable(msg) if attempt >= self.cfg.max_retries => {
                    return Err(PortError::Transport(format!(
                        "{msg} (gave up after {} attempts)",
                        attempt + 1
                    )))
                }
                Attempt::Retryable(msg) => {
                    log::warn!("completion attempt {} failed: {msg}; retrying", attempt + 1);
                    tokio::time::sleep(backoff).await;
                    backoff *= self.cfg.backoff_factor;
                    attempt += 1;
                }
            }
        }
    }

    fn usage(&self) -> Usage {
        self.usage.snapshot()
    }
}
