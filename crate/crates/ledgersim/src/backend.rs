//! Chat-completion backend used by external profile derivation and the
//! external proposal source.
//!
//! The engine is backend-agnostic: anything that answers a chat-completion
//! style request behind [`ChatTransport`] works. The bundled transport speaks
//! JSON over HTTP with an OpenAI-compatible body shape. Credentials come from
//! an environment variable named in the config, never from the config file
//! itself.

use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Configuration for an external chat-completion endpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExternalEndpointConfig {
    /// Full URL of the chat completions endpoint.
    pub url: String,
    /// Model identifier passed through in the request body.
    pub model: String,
    /// Name of the environment variable holding the API key. Empty disables auth.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Reprompts allowed when a response fails schema validation.
    #[serde(default = "default_parse_retries")]
    pub parse_retries: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Upper bound on concurrent in-flight requests across workers.
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    /// When set, request/response bodies are logged to stderr with
    /// credentials redacted.
    #[serde(default)]
    pub log_bodies: bool,
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_parse_retries() -> u32 {
    1
}
fn default_temperature() -> f64 {
    0.7
}
fn default_max_concurrency() -> usize {
    4
}

impl Default for ExternalEndpointConfig {
    fn default() -> Self {
        ExternalEndpointConfig {
            url: "http://localhost:8000/v1/chat/completions".to_string(),
            model: "default".to_string(),
            api_key_env: String::new(),
            timeout_secs: default_timeout_secs(),
            parse_retries: default_parse_retries(),
            temperature: default_temperature(),
            max_concurrency: default_max_concurrency(),
            log_bodies: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "system".to_string(),
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "user".to_string(),
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: "assistant".to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ChatResponseMessage {
    content: String,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint returned status {status}: {body}")]
    BadStatus { status: u16, body: String },
    #[error("malformed response body: {detail}; raw response: {raw}")]
    MalformedResponse { detail: String, raw: String },
}

/// Anything that can answer a chat request with the assistant's text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// HTTP transport for OpenAI-compatible chat completion endpoints.
pub struct HttpChatTransport {
    client: reqwest::blocking::Client,
    config: ExternalEndpointConfig,
}

impl HttpChatTransport {
    pub fn new(config: ExternalEndpointConfig) -> Result<HttpChatTransport, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        Ok(HttpChatTransport { client, config })
    }

    fn api_key(&self) -> Option<String> {
        if self.config.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&self.config.api_key_env).ok()
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if self.config.log_bodies {
            let body = serde_json::to_string(request).unwrap_or_default();
            eprintln!(
                "[llm] request to {} (auth redacted): {body}",
                self.config.url
            );
        }
        let mut builder = self.client.post(&self.config.url).json(request);
        if let Some(key) = self.api_key() {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        if status != 200 {
            return Err(BackendError::BadStatus { status, body: text });
        }
        if self.config.log_bodies {
            eprintln!("[llm] response: {text}");
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse {
                detail: e.to_string(),
                raw: text.clone(),
            })?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or(BackendError::MalformedResponse {
                detail: "no choices in response".to_string(),
                raw: text,
            })
    }
}

/// Scripted transport that replays canned responses in order. Used by tests
/// and offline demos; behaves like a backend that answers deterministically.
pub struct ScriptedTransport {
    responses: std::sync::Mutex<std::collections::VecDeque<String>>,
}

impl ScriptedTransport {
    pub fn new(responses: Vec<String>) -> ScriptedTransport {
        ScriptedTransport {
            responses: std::sync::Mutex::new(responses.into()),
        }
    }
}

impl ChatTransport for ScriptedTransport {
    fn complete(&self, _request: &ChatRequest) -> Result<String, BackendError> {
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| BackendError::Unreachable("script exhausted".to_string()))
    }
}
