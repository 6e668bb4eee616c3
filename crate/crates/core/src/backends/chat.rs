//! Chat-completions request/response types and the HTTP client for
//! OpenAI-compatible inference servers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::http::{send_with_retry, Body, HttpRequest, RetryPolicy, Transport};
use super::BackendError;

pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
}

impl SamplingParams {
    /// Preset for chain-of-thought sampling.
    pub const fn cot() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            top_k: 20,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Preset for direct-answer sampling.
    pub const fn no_cot() -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.8,
            top_k: 20,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    /// Greedy decoding, used for bibliography extraction.
    pub const fn greedy() -> Self {
        Self {
            temperature: 0.0,
            top_p: 1.0,
            top_k: 1,
            max_tokens: 8192,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::InvalidConfig(
                "temperature must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(BackendError::InvalidConfig(
                "top_p must be in (0, 1]".into(),
            ));
        }
        if self.top_k == 0 {
            return Err(BackendError::InvalidConfig("top_k must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub sampling: SamplingParams,
    /// Text the assistant turn is forced to begin with.
    pub prefill: Option<String>,
}

impl ChatRequest {
    pub fn system_prompt(&self) -> Option<&str> {
        self.messages
            .first()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    pub fn user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// JSON body for a `/chat/completions` call. A prefill is sent as a
    /// trailing assistant message that the server continues rather than
    /// closes.
    pub fn to_wire(&self) -> Value {
        let mut messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| json!({"role": m.role, "content": m.content}))
            .collect();
        let mut body = json!({
            "model": self.model,
            "temperature": self.sampling.temperature,
            "top_p": self.sampling.top_p,
            "top_k": self.sampling.top_k,
            "max_tokens": self.sampling.max_tokens,
        });
        if let Some(prefill) = &self.prefill {
            messages.push(json!({"role": "assistant", "content": prefill}));
            body["continue_final_message"] = json!(true);
            body["add_generation_prompt"] = json!(false);
        }
        body["messages"] = Value::Array(messages);
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: Option<String>,
    pub usage: Option<TokenUsage>,
}

impl ChatResponse {
    pub fn from_wire(body: &str) -> Result<Self, String> {
        let v: Value = serde_json::from_str(body).map_err(|e| e.to_string())?;
        let choice = v
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or("response has no choices")?;
        let text = choice
            .pointer("/message/content")
            .or_else(|| choice.get("text"))
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_owned();
        let finish_reason = choice
            .get("finish_reason")
            .and_then(Value::as_str)
            .map(str::to_owned);
        let usage = v
            .get("usage")
            .and_then(|u| serde_json::from_value(u.clone()).ok());
        Ok(Self {
            text,
            finish_reason,
            usage,
        })
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpChatClient {
    endpoint: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
}

impl HttpChatClient {
    /// `endpoint` is the API base, e.g. `http://localhost:8000/v1`.
    pub fn new(
        endpoint: &str,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            api_key,
            transport,
            retry,
        }
    }

    pub fn build_http_request(&self, request: &ChatRequest) -> HttpRequest {
        let url = format!("{}/chat/completions", self.endpoint);
        let mut http = HttpRequest::post(url, Body::Json(request.to_wire().to_string()));
        if let Some(key) = &self.api_key {
            http = http.header("Authorization", format!("Bearer {key}"));
        }
        http
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let http = self.build_http_request(request);
        let response = send_with_retry(self.transport.as_ref(), &http, &self.retry)?;
        ChatResponse::from_wire(&response.body).map_err(|message| BackendError::Endpoint {
            url: http.url.clone(),
            message,
        })
    }
}
