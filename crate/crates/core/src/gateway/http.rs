//! OpenAI-compatible HTTP transport (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionRequest, Transport, TransportError};

pub const ENV_PROVIDER_URL: &str = "ANCHOROPT_PROVIDER_URL";
pub const ENV_CHAT_MODEL: &str = "ANCHOROPT_CHAT_MODEL";
pub const ENV_EMBEDDING_MODEL: &str = "ANCHOROPT_EMBEDDING_MODEL";
pub const ENV_API_KEY: &str = "ANCHOROPT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub url: String,
    pub chat_model: String,
    pub embedding_model: String,
    /// Usually left unset in files and supplied through the environment.
    pub api_key: Option<String>,
    pub request_timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            url: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4o".into(),
            embedding_model: "all-MiniLM-L6-v2".into(),
            api_key: None,
            request_timeout_secs: 120,
        }
    }
}

impl ProviderConfig {
    /// Environment variables override file values.
    pub fn apply_env(&mut self) {
        self.apply_env_from(|k| std::env::var(k).ok());
    }

    pub fn apply_env_from(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_PROVIDER_URL) {
            self.url = v;
        }
        if let Some(v) = get(ENV_CHAT_MODEL) {
            self.chat_model = v;
        }
        if let Some(v) = get(ENV_EMBEDDING_MODEL) {
            self.embedding_model = v;
        }
        if let Some(v) = get(ENV_API_KEY) {
            self.api_key = Some(v);
        }
    }
}

pub struct HttpTransport {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(config: ProviderConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| TransportError::fatal(e.to_string()))?;
        Ok(Self { config, client })
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, TransportError> {
        let url = format!("{}/{}", self.config.url.trim_end_matches('/'), path);
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| TransportError {
            message: format!("{url}: {e}"),
            transient: e.is_timeout() || e.is_connect() || e.is_request(),
        })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            let transient = status.as_u16() == 429 || status.is_server_error();
            return Err(TransportError {
                message: format!("{url}: HTTP {status}: {}", truncate(&text, 500)),
                transient,
            });
        }
        response
            .json::<Value>()
            .map_err(|e| TransportError::fatal(format!("{url}: invalid JSON body: {e}")))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl Transport for HttpTransport {
    fn chat(&self, req: &CompletionRequest) -> Result<String, TransportError> {
        let body = json!({
            "model": self.config.chat_model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let value = self.post("chat/completions", body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::fatal("completion response has no message content"))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        let body = json!({
            "model": self.config.embedding_model,
            "input": text,
        });
        let value = self.post("embeddings", body)?;
        value["data"][0]["embedding"]
            .as_array()
            .and_then(|items| items.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
            .ok_or_else(|| TransportError::fatal("embedding response has no numeric vector"))
    }
}
