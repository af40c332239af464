//! Chat-completions HTTP backend.
//!
//! Speaks the OpenAI-style `/chat/completions` wire format: a system and a
//! user message, with raster observations inlined as base64 data URIs.
//! Transient failures (connect errors, timeouts, 429 and 5xx statuses) are
//! retried with exponential backoff; other statuses fail fast. The API key
//! comes from the environment only and is scrubbed from error text.

use std::sync::OnceLock;
use std::time::Duration;

use base64::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Attachment, BackendError, BackendRequest, API_KEY_ENV};

/// Connection settings for the chat-completions endpoint. The key itself is
/// deliberately absent: it is read from `LERA_API_KEY` at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_concurrency: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            timeout_s: 30.0,
            max_retries: 3,
            backoff_base_ms: 250,
            max_concurrency: 4,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    client: OnceLock<reqwest::blocking::Client>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .field("api_key", &"[redacted]")
            .finish()
    }
}

impl HttpBackend {
    /// Builds a backend whose key comes from the `LERA_API_KEY` environment
    /// variable. Fails when the variable is unset or empty.
    pub fn from_env(config: HttpConfig) -> Result<HttpBackend, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).unwrap_or_default();
        if api_key.trim().is_empty() {
            return Err(BackendError::MissingAuth);
        }
        Ok(HttpBackend { config, api_key, client: OnceLock::new() })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs_f64(self.config.timeout_s))
                .build()
                .expect("http client construction cannot fail with these options")
        })
    }

    fn scrub(&self, text: &str) -> String {
        text.replace(&self.api_key, "[redacted]")
    }

    pub fn complete(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let body = build_body(&self.config.model, request);
        let attempts = 1 + self.config.max_retries;
        let mut last_reason = String::from("no attempt made");
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let sent = self
                .client()
                .post(&self.config.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send();
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    last_reason = self.scrub(&e.to_string());
                    continue;
                }
            };
            let status = response.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last_reason = format!("http status {}", status.as_u16());
                continue;
            }
            if !status.is_success() {
                let text = response.text().unwrap_or_default();
                let mut snippet = self.scrub(&text);
                snippet.truncate(200);
                return Err(BackendError::Http { status: status.as_u16(), snippet });
            }
            let value: Value =
                response.json().map_err(|_| BackendError::MalformedReply)?;
            return extract_content(&value).ok_or(BackendError::MalformedReply);
        }
        Err(BackendError::Transport { attempts, reason: last_reason })
    }
}

/// The JSON request body for one completion call.
fn build_body(model: &str, request: &BackendRequest) -> Value {
    let user_content = match &request.attachment {
        None => json!(request.user_text),
        Some(attachment) => {
            let mut parts = vec![json!({"type": "text", "text": request.user_text})];
            match attachment {
                Attachment::Raster(image) => {
                    let encoded = BASE64_STANDARD.encode(image.to_ppm());
                    let url = format!(
                        "data:{};base64,{}",
                        crate::world::RasterImage::media_type(),
                        encoded
                    );
                    parts.push(json!({"type": "image_url", "image_url": {"url": url}}));
                }
                Attachment::Snapshot(snapshot) => {
                    parts.push(json!({
                        "type": "text",
                        "text": format!("Scene snapshot (JSON):\n{snapshot}"),
                    }));
                }
            }
            json!(parts)
        }
    };
    json!({
        "model": model,
        "temperature": request.decode.temperature,
        "max_tokens": request.decode.max_tokens,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": user_content},
        ],
    })
}

/// The assistant text from a chat-completions response, accepting both the
/// plain-string and the typed-parts content shapes.
fn extract_content(value: &Value) -> Option<String> {
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let mut out = String::new();
            for part in parts {
                if part.get("type").and_then(Value::as_str) == Some("text") {
                    out.push_str(part.get("text")?.as_str()?);
                }
            }
            Some(out)
        }
        _ => None,
    }
}
