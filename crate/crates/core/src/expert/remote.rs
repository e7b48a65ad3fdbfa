//! OpenAI-compatible chat-completion client.

use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{ExpertBackend, ExpertError, ExpertRequest, ExpertResponse};
use crate::state::{ImageRef, MediaKind};
use crate::tokens;

pub const ENV_URL: &str = "COGPLAN_EXPERT_URL";
pub const ENV_KEY: &str = "COGPLAN_EXPERT_KEY";
pub const ENV_MODEL: &str = "COGPLAN_EXPERT_MODEL";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteExpertConfig {
    /// Base URL (`.../v1`) or the full `.../chat/completions` endpoint.
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff: Duration,
}

impl RemoteExpertConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteExpertConfig {
            url: url.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_retries: 2,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads `COGPLAN_EXPERT_URL`, `COGPLAN_EXPERT_KEY` and `COGPLAN_EXPERT_MODEL`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.is_empty())?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-4o".to_string());
        let mut config = RemoteExpertConfig::new(url, model);
        config.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Some(config)
    }

    fn endpoint(&self) -> String {
        let base = self.url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct OpenAiCompatExpert {
    config: RemoteExpertConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiCompatExpert {
    pub fn new(config: RemoteExpertConfig) -> Result<Self, ExpertError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ExpertError::Config(format!("http client: {e}")))?;
        Ok(OpenAiCompatExpert { config, client })
    }

    fn send_once(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_success() {
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(format!("bad response body: {e}")))
        } else if status.as_u16() == 429 || status.is_server_error() {
            Err(Attempt::Retry(format!("HTTP {status}: {text}")))
        } else {
            Err(Attempt::Fatal(format!("HTTP {status}: {text}")))
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl ExpertBackend for OpenAiCompatExpert {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        let body = build_body(&self.config.model, request)?;
        let started = Instant::now();
        let mut attempt = 0;
        let value = loop {
            match self.send_once(&body) {
                Ok(value) => break value,
                Err(Attempt::Fatal(msg)) => return Err(ExpertError::Transport(msg)),
                Err(Attempt::Retry(msg)) if attempt < self.config.max_retries => {
                    let wait = self.config.backoff * 2u32.pow(attempt);
                    warn!(attempt, error = %msg, "expert call failed, retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(Attempt::Retry(msg)) => return Err(ExpertError::Transport(msg)),
            }
        };
        let latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        let mut response = parse_response(&value, request)?;
        response.latency_ms = latency_ms;
        debug!(latency_ms, tokens = response.completion_tokens, "expert call complete");
        Ok(response)
    }
}

fn mime_for(path: &str) -> &'static str {
    match Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

/// URL form of an image as accepted by the chat-completion contract.
pub(crate) fn image_url(image: &ImageRef) -> Result<String, ExpertError> {
    match image.media_kind() {
        MediaKind::Url | MediaKind::InlineBytes => Ok(image.locator().to_string()),
        MediaKind::Path => {
            let bytes = std::fs::read(image.locator())
                .map_err(|e| ExpertError::InvalidRequest(format!("{}: {e}", image.locator())))?;
            let payload = base64::engine::general_purpose::STANDARD.encode(bytes);
            Ok(format!("data:{};base64,{payload}", mime_for(image.locator())))
        }
    }
}

pub(crate) fn build_body(model: &str, request: &ExpertRequest) -> Result<Value, ExpertError> {
    let mut parts = vec![json!({"type": "text", "text": request.user_text})];
    for image in &request.images {
        parts.push(json!({"type": "image_url", "image_url": {"url": image_url(image)?}}));
    }
    let mut messages = Vec::new();
    if !request.system_prompt.is_empty() {
        messages.push(json!({"role": "system", "content": request.system_prompt}));
    }
    messages.push(json!({"role": "user", "content": parts}));
    Ok(json!({
        "model": model,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
        "temperature": 0,
    }))
}

pub(crate) fn parse_response(value: &Value, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
    let content = &value["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join(""),
        _ => {
            return Err(ExpertError::Transport(
                "response carries no message content".into(),
            ))
        }
    };
    if text.trim().is_empty() {
        return Err(ExpertError::Transport("empty completion".into()));
    }
    let usage = &value["usage"];
    Ok(ExpertResponse {
        prompt_tokens: usage["prompt_tokens"]
            .as_u64()
            .unwrap_or_else(|| request.prompt_tokens()),
        completion_tokens: usage["completion_tokens"]
            .as_u64()
            .unwrap_or(tokens::count(&text) as u64),
        text,
        latency_ms: 0.0,
    })
}
