//! Chat-style HTTP JSON client: `{model, messages, temperature, max_tokens}`
//! with images as base64 data URLs.

use std::path::Path;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const ENDPOINT_ENV: &str = "ROBO2VLM_ENDPOINT";
pub const API_KEY_ENV: &str = "ROBO2VLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Shape(String),
    #[error("image {path}: {message}")]
    Image { path: String, message: String },
    #[error("no endpoint configured (set {ENDPOINT_ENV} or pass one)")]
    NoEndpoint,
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct ChatClient {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    /// Extra top-level request fields, e.g. a context-length hint.
    pub extra: serde_json::Map<String, Value>,
    agent: ureq::Agent,
}

/// One user-message part.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    /// PNG bytes, sent as a data URL.
    Image(Vec<u8>),
}

pub fn image_part(path: &Path) -> Result<Part, ClientError> {
    std::fs::read(path)
        .map(Part::Image)
        .map_err(|e| ClientError::Image { path: path.display().to_string(), message: e.to_string() })
}

fn part_json(p: &Part) -> Value {
    match p {
        Part::Text(t) => json!({"type": "text", "text": t}),
        Part::Image(bytes) => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
            json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}})
        }
    }
}

/// Request body for a single-turn chat.
pub fn request_body(
    model: &str,
    parts: &[Part],
    temperature: f64,
    max_tokens: u32,
    extra: &serde_json::Map<String, Value>,
) -> Value {
    let content: Value = match parts {
        [Part::Text(t)] => json!(t),
        _ => Value::Array(parts.iter().map(part_json).collect()),
    };
    let mut body = json!({
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": temperature,
        "max_tokens": max_tokens,
    });
    let obj = body.as_object_mut().expect("body is an object");
    for (k, v) in extra {
        obj.insert(k.clone(), v.clone());
    }
    body
}

/// Assistant text from the common response shapes.
pub fn response_text(v: &Value) -> Result<String, ClientError> {
    let choice = v.pointer("/choices/0");
    let content = choice
        .and_then(|c| c.pointer("/message/content").or_else(|| c.get("text")))
        .or_else(|| v.get("content"))
        .or_else(|| v.get("response"));
    match content {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => Ok(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect()),
        _ => Err(ClientError::Shape(v.to_string().chars().take(200).collect())),
    }
}

impl ChatClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self {
            url: url.into(),
            api_key,
            model: model.into(),
            retry: RetryPolicy::default(),
            timeout,
            extra: serde_json::Map::new(),
            agent,
        }
    }

    /// Endpoint and key from `ROBO2VLM_ENDPOINT` / the named key variable,
    /// unless `url` is given.
    pub fn from_env(url: Option<&str>, key_env: &str, model: &str, timeout: Duration) -> Result<Self, ClientError> {
        let url = match url {
            Some(u) => u.to_string(),
            None => std::env::var(ENDPOINT_ENV).map_err(|_| ClientError::NoEndpoint)?,
        };
        let key = std::env::var(key_env).ok().filter(|k| !k.is_empty());
        Ok(Self::new(url, key, model, timeout))
    }

    fn post_once(&self, body: &Value) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = req.send_json(body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(ClientError::Status { status, body: text.chars().take(500).collect() });
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| ClientError::Shape(e.to_string()))?;
        response_text(&v)
    }

    /// Sends one chat turn, retrying transport errors, 429 and 5xx.
    pub fn chat(&self, parts: &[Part], temperature: f64, max_tokens: u32) -> Result<String, ClientError> {
        let body = request_body(&self.model, parts, temperature, max_tokens, &self.extra);
        let attempts = self.retry.max_attempts.max(1);
        let mut last = ClientError::Transport("no attempt made".into());
        for attempt in 0..attempts {
            match self.post_once(&body) {
                Ok(t) => return Ok(t),
                Err(e) if e.retryable() && attempt + 1 < attempts => {
                    log::warn!("{}: {e}; retrying", self.url);
                    std::thread::sleep(Duration::from_millis(self.retry.backoff_ms << attempt));
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}
