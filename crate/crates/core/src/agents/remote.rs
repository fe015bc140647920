//! Chat-completions client.
//!
//! Requests carry one user message: the rendered prompt text, then for each
//! image a short text label followed by the image itself. Local assets are
//! sent as base64 data URLs, byte for byte; `http(s)` references are passed
//! through. The API key is read from the configured environment variable on
//! every call and never logged.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::PromptPayload;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpointConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://openrouter.ai/api/v1`.
    pub base_url: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_image_bytes")]
    pub max_image_bytes: u64,
    /// Minimum spacing between requests to this endpoint+model, across all matches.
    #[serde(default)]
    pub min_request_interval_ms: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_max_image_bytes() -> u64 {
    20 * 1024 * 1024
}

impl ModelEndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        ModelEndpointConfig {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_image_bytes: default_max_image_bytes(),
            min_request_interval_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_secs == 0 {
            return Err("timeout must be > 0".into());
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!("base_url must be http(s): {}", self.base_url));
        }
        if self.model_id.trim().is_empty() {
            return Err("model_id is empty".into());
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn limiter_key(&self) -> String {
        format!("{}#{}", self.base_url, self.model_id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    BadResponse(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("image {asset} is {bytes} bytes, limit {limit}")]
    ImageTooLarge { asset: String, bytes: u64, limit: u64 },
    #[error("cannot read image {asset}: {detail}")]
    Asset { asset: String, detail: String },
}

/// One blocking model call. Implementations must be shareable across threads.
pub trait ChatTransport: Send + Sync {
    fn complete(
        &self,
        endpoint: &ModelEndpointConfig,
        payload: &PromptPayload,
        temperature: f64,
    ) -> Result<String, TransportError>;
}

/// Refuses every call.
#[derive(Debug, Default)]
pub struct OfflineTransport;

impl ChatTransport for OfflineTransport {
    fn complete(&self, endpoint: &ModelEndpointConfig, _: &PromptPayload, _: f64) -> Result<String, TransportError> {
        Err(TransportError::Unreachable(format!(
            "no transport configured for {}",
            endpoint.model_id
        )))
    }
}

pub fn mime_for(path: &str) -> &'static str {
    let ext = Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

/// URL to put in an `image_url` part for `asset_ref`.
pub fn image_url(asset_ref: &str, max_bytes: u64) -> Result<String, TransportError> {
    if asset_ref.starts_with("http://") || asset_ref.starts_with("https://") || asset_ref.starts_with("data:") {
        return Ok(asset_ref.to_string());
    }
    let asset_err = |detail: String| TransportError::Asset {
        asset: asset_ref.to_string(),
        detail,
    };
    let meta = std::fs::metadata(asset_ref).map_err(|e| asset_err(e.to_string()))?;
    if meta.len() > max_bytes {
        return Err(TransportError::ImageTooLarge {
            asset: asset_ref.to_string(),
            bytes: meta.len(),
            limit: max_bytes,
        });
    }
    let bytes = std::fs::read(asset_ref).map_err(|e| asset_err(e.to_string()))?;
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{};base64,{}", mime_for(asset_ref), encoded))
}

pub fn build_request_body(
    endpoint: &ModelEndpointConfig,
    payload: &PromptPayload,
    temperature: f64,
) -> Result<Value, TransportError> {
    let mut content = vec![json!({"type": "text", "text": payload.text})];
    for image in &payload.images {
        content.push(json!({"type": "text", "text": format!("{}:", image.label)}));
        let url = image_url(&image.asset_ref, endpoint.max_image_bytes)?;
        content.push(json!({"type": "image_url", "image_url": {"url": url}}));
    }
    Ok(json!({
        "model": endpoint.model_id,
        "temperature": temperature,
        "messages": [{"role": "user", "content": content}],
    }))
}

/// Text of `choices[0].message.content`, which may be a string or a list of text parts.
pub fn extract_content(body: &Value) -> Result<String, TransportError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| TransportError::BadResponse(preview(&body.to_string())))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(TransportError::BadResponse(preview(&other.to_string()))),
    }
}

fn preview(s: &str) -> String {
    s.chars().take(200).collect()
}

/// Request body with data URLs shortened, for debug logs.
fn redacted(body: &Value) -> Value {
    let mut body = body.clone();
    if let Some(messages) = body.get_mut("messages").and_then(Value::as_array_mut) {
        for part in messages
            .iter_mut()
            .filter_map(|m| m.get_mut("content").and_then(Value::as_array_mut))
            .flatten()
        {
            if let Some(url) = part.pointer_mut("/image_url/url") {
                if let Some(s) = url.as_str().filter(|s| s.starts_with("data:")) {
                    *url = Value::String(format!("{}...({} chars)", &s[..s.find(',').unwrap_or(0)], s.len()));
                }
            }
        }
    }
    body
}

/// Blocking HTTP transport with per-endpoint request spacing.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    last_request: Mutex<HashMap<String, Instant>>,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport {
            client: reqwest::blocking::Client::new(),
            last_request: Mutex::new(HashMap::new()),
        }
    }

    fn wait_turn(&self, endpoint: &ModelEndpointConfig) {
        if endpoint.min_request_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(endpoint.min_request_interval_ms);
        let sleep_for = {
            let mut last = self.last_request.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = match last.get(&endpoint.limiter_key()) {
                Some(prev) if *prev + interval > now => *prev + interval,
                _ => now,
            };
            last.insert(endpoint.limiter_key(), slot);
            slot.saturating_duration_since(now)
        };
        if !sleep_for.is_zero() {
            std::thread::sleep(sleep_for);
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(
        &self,
        endpoint: &ModelEndpointConfig,
        payload: &PromptPayload,
        temperature: f64,
    ) -> Result<String, TransportError> {
        let body = build_request_body(endpoint, payload, temperature)?;
        let api_key = match &endpoint.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| TransportError::MissingApiKey(var.clone()))?),
            None => None,
        };
        self.wait_turn(endpoint);
        tracing::debug!(model = %endpoint.model_id, body = %redacted(&body), "chat request");

        let mut request = self
            .client
            .post(endpoint.completions_url())
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .json(&body);
        if let Some(key) = api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| TransportError::Unreachable(e.without_url().to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| TransportError::Unreachable(e.without_url().to_string()))?;
        tracing::debug!(model = %endpoint.model_id, status = status.as_u16(), body = %preview(&text), "chat response");
        if !status.is_success() {
            return Err(TransportError::Http {
                status: status.as_u16(),
                body: preview(&text),
            });
        }
        let value: Value = serde_json::from_str(&text).map_err(|_| TransportError::BadResponse(preview(&text)))?;
        extract_content(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{PromptImage, Task};

    fn payload(images: Vec<PromptImage>) -> PromptPayload {
        PromptPayload {
            task: Task::GuessDirect,
            text: "pick one".into(),
            images,
        }
    }

    #[test]
    fn images_are_sent_unmodified_as_base64() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("7.png");
        let bytes = [0x89u8, b'P', b'N', b'G', 0, 1, 2, 255];
        std::fs::write(&path, bytes).unwrap();
        let asset = path.to_str().unwrap().to_string();
        let body = build_request_body(
            &ModelEndpointConfig::new("http://x", "m"),
            &payload(vec![PromptImage {
                label: "Candidate 1".into(),
                asset_ref: asset,
            }]),
            0.7,
        )
        .unwrap();
        let url = body.pointer("/messages/0/content/2/image_url/url").unwrap().as_str().unwrap();
        let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
        let decoded = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
        assert_eq!(decoded, bytes);
        assert_eq!(body["temperature"], 0.7);
        assert!(!redacted(&body).to_string().contains(b64));
    }

    #[test]
    fn oversize_and_missing_images() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.jpg");
        std::fs::write(&path, vec![0u8; 100]).unwrap();
        let mut ep = ModelEndpointConfig::new("http://x", "m");
        ep.max_image_bytes = 99;
        let img = |p: &str| {
            payload(vec![PromptImage {
                label: "Image".into(),
                asset_ref: p.into(),
            }])
        };
        assert!(matches!(
            build_request_body(&ep, &img(path.to_str().unwrap()), 0.0),
            Err(TransportError::ImageTooLarge { bytes: 100, .. })
        ));
        assert!(matches!(
            build_request_body(&ep, &img("/nonexistent/1.png"), 0.0),
            Err(TransportError::Asset { .. })
        ));
        assert!(build_request_body(&ep, &img("https://example.org/a.png"), 0.0).is_ok());
    }

    #[test]
    fn content_extraction() {
        let v = json!({"choices":[{"message":{"content":"{\"answer\":\"1\"}"}}]});
        assert_eq!(extract_content(&v).unwrap(), "{\"answer\":\"1\"}");
        let v = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(extract_content(&v).unwrap(), "ab");
        assert!(extract_content(&json!({"error": "x"})).is_err());
    }

    #[test]
    fn endpoint_validation() {
        let mut ep = ModelEndpointConfig::new("https://openrouter.ai/api/v1/", "m");
        assert_eq!(ep.completions_url(), "https://openrouter.ai/api/v1/chat/completions");
        assert!(ep.validate().is_ok());
        ep.timeout_secs = 0;
        assert!(ep.validate().is_err());
    }
}
