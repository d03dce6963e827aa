use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::TokenUsage;

use super::{Agent, AgentRequest, AgentResponse, BackendError};

fn default_auth_header() -> String {
    "Authorization".to_string()
}

fn default_auth_prefix() -> String {
    "Bearer ".to_string()
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    250
}

fn default_timeout_s() -> f64 {
    60.0
}

/// How to place our prompt into the provider's request body. Defaults
/// match OpenAI-style chat completions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestMapping {
    pub model_field: String,
    pub messages_field: String,
    /// Extra body fields merged verbatim into every request.
    pub extra_body: BTreeMap<String, Value>,
}

impl Default for RequestMapping {
    fn default() -> Self {
        RequestMapping {
            model_field: "model".to_string(),
            messages_field: "messages".to_string(),
            extra_body: BTreeMap::new(),
        }
    }
}

/// Dot paths into the provider's response JSON. Array indices are plain
/// numbers ("choices.0.message.content").
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseMapping {
    pub text_path: String,
    pub prompt_tokens_path: String,
    pub completion_tokens_path: String,
}

impl Default for ResponseMapping {
    fn default() -> Self {
        ResponseMapping {
            text_path: "choices.0.message.content".to_string(),
            prompt_tokens_path: "usage.prompt_tokens".to_string(),
            completion_tokens_path: "usage.completion_tokens".to_string(),
        }
    }
}

/// A provider client is configuration, not code: base URL, auth header
/// shape, and request/response field mappings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub base_url: String,
    /// Provider-side model identifier sent in the request body.
    pub model_name: String,
    /// Environment variable holding the credential; unset means the
    /// backend sends no auth header.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default)]
    pub extra_headers: BTreeMap<String, String>,
    #[serde(default)]
    pub request: RequestMapping,
    #[serde(default)]
    pub response: ResponseMapping,
    /// Retries after the first attempt on 429/5xx.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Base backoff; doubles per retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

/// Live chat-completion client over HTTP with bounded retry/backoff.
pub struct HttpBackend {
    config: HttpBackendConfig,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        if config.base_url.is_empty() {
            return Err(BackendError::BadResponse(
                "http backend requires a base_url".to_string(),
            ));
        }
        Ok(HttpBackend { config })
    }

    fn auth_value(&self) -> Result<Option<String>, BackendError> {
        match &self.config.auth_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(secret) if !secret.is_empty() => {
                    Ok(Some(format!("{}{}", self.config.auth_prefix, secret)))
                }
                _ => Err(BackendError::Auth(format!(
                    "environment variable {var} is unset or empty"
                ))),
            },
        }
    }

    fn build_body(&self, request: &AgentRequest) -> Value {
        let mapping = &self.config.request;
        let mut body = serde_json::Map::new();
        body.insert(
            mapping.model_field.clone(),
            Value::String(self.config.model_name.clone()),
        );
        body.insert(
            mapping.messages_field.clone(),
            json!([{ "role": "user", "content": request.prompt }]),
        );
        for (k, v) in &mapping.extra_body {
            body.insert(k.clone(), v.clone());
        }
        // sampling controls pass through opaquely
        for (k, v) in &request.sampling {
            body.insert(k.clone(), v.clone());
        }
        Value::Object(body)
    }

    fn send_once(
        &self,
        body: &Value,
        auth: Option<&str>,
        timeout: Duration,
    ) -> Result<(u16, String), BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut builder = agent.post(&self.config.base_url);
        if let Some(value) = auth {
            builder = builder.header(&self.config.auth_header, value);
        }
        for (k, v) in &self.config.extra_headers {
            builder = builder.header(k, v);
        }
        let mut response = builder
            .send_json(body)
            .map_err(|e| map_transport(e, timeout))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok((status, text))
    }
}

fn map_transport(err: ureq::Error, timeout: Duration) -> BackendError {
    match err {
        ureq::Error::Timeout(_) => BackendError::Timeout(timeout.as_secs_f64()),
        other => BackendError::Transport(other.to_string()),
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Walk a dot path through a JSON value.
fn lookup_path<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    let mut current = value;
    for segment in path.split('.') {
        current = match current {
            Value::Object(map) => map.get(segment)?,
            Value::Array(items) => items.get(segment.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(current)
}

impl Agent for HttpBackend {
    fn invoke(&self, request: &AgentRequest) -> Result<AgentResponse, BackendError> {
        let auth = self.auth_value()?;
        let body = self.build_body(request);
        let timeout = Duration::from_secs_f64(request.timeout_s.min(self.config.timeout_s));
        let start = Instant::now();

        let mut attempt = 0u32;
        let (status, text) = loop {
            let result = self.send_once(&body, auth.as_deref(), timeout);
            match result {
                Ok((status, text)) => {
                    if retryable(status) && attempt < self.config.max_retries {
                        let backoff = Duration::from_millis(
                            self.config.backoff_ms.saturating_mul(1 << attempt),
                        );
                        std::thread::sleep(backoff);
                        attempt += 1;
                        continue;
                    }
                    if retryable(status) {
                        return Err(BackendError::RetriesExhausted {
                            attempts: attempt + 1,
                            last_status: status,
                        });
                    }
                    break (status, text);
                }
                Err(err) => return Err(err),
            }
        };

        if status == 401 || status == 403 {
            return Err(BackendError::Auth(format!(
                "provider returned status {status}"
            )));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::BadStatus { status, body: text });
        }

        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponse(format!("invalid json: {e}")))?;
        let mapping = &self.config.response;
        let raw_text = lookup_path(&parsed, &mapping.text_path)
            .and_then(Value::as_str)
            .ok_or_else(|| {
                BackendError::BadResponse(format!("missing text at {:?}", mapping.text_path))
            })?
            .to_string();
        // Token counts come from the provider or not at all; an absent
        // usage block is recorded as absent, never zero-filled.
        let prompt_tokens =
            lookup_path(&parsed, &mapping.prompt_tokens_path).and_then(Value::as_u64);
        let completion_tokens =
            lookup_path(&parsed, &mapping.completion_tokens_path).and_then(Value::as_u64);
        let usage = match (prompt_tokens, completion_tokens) {
            (Some(p), Some(c)) => Some(TokenUsage::new(p, c)),
            _ => None,
        };

        Ok(AgentResponse::new(
            raw_text,
            usage,
            start.elapsed().as_secs_f64(),
        ))
    }

    fn deterministic(&self) -> bool {
        false
    }
}
