//! Completion port: the single seam between the orchestration code and a
//! language model.

use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

mod http;
mod mock;

pub use http::{
    HttpConfig, HttpPort, DEFAULT_API_KEY_VAR, ENV_API_KEY_VAR, ENV_ENDPOINT, ENV_MODEL,
};
pub use mock::{extract_tool_names, Fault, Matcher, MockFixture, MockRule, ScriptedMock};

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum PortError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("endpoint requires an API key but `{0}` is not set")]
    AuthMissing(String),
    #[error("invalid port configuration: {0}")]
    Config(String),
}

/// One chat completion: a system message followed by a user message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
}

/// Request defaults shared by every completion of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatDefaults {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ChatDefaults {
    fn default() -> Self {
        Self {
            model: "default".into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl ChatDefaults {
    pub fn request(&self, system: String, user: impl Into<String>) -> ChatRequest {
        ChatRequest {
            system,
            user: user.into(),
            temperature: self.temperature.max(0.0),
            max_tokens: self.max_tokens,
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Thread-safe usage counters.
#[derive(Debug, Default)]
pub(crate) struct UsageCounter {
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl UsageCounter {
    /// Records a call and returns its 1-based ordinal.
    pub(crate) fn record_call(&self) -> u64 {
        self.calls.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub(crate) fn record_tokens(&self, prompt: u64, completion: u64) {
        self.prompt_tokens.fetch_add(prompt, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(completion, Ordering::Relaxed);
    }

    pub(crate) fn snapshot(&self) -> Usage {
        Usage {
            calls: self.calls.load(Ordering::SeqCst),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

#[async_trait]
pub trait CompletionPort: Send + Sync {
    async fn complete(&self, req: &ChatRequest) -> Result<String, PortError>;

    /// Totals since construction.
    fn usage(&self) -> Usage;
}

#[async_trait]
impl<P: CompletionPort + ?Sized> CompletionPort for std::sync::Arc<P> {
    async fn complete(&self, req: &ChatRequest) -> Result<String, PortError> {
        (**self).complete(req).await
    }

    fn usage(&self) -> Usage {
        (**self).usage()
    }
}
