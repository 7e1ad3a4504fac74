//! Access to a chat-completion endpoint and a text-embedding endpoint, with
//! record/replay through a [`Cassette`].
//!
//! A [`Gateway`] owns the cassette and the transport. Callers talk to it
//! through a [`Session`], which keeps its own replay cursors so that two
//! runs over the same cassette see the same responses.

mod cassette;
mod http;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use cassette::{fingerprint, normalize_prompt, sha256_hex, Cassette, CassetteEntry};
pub use http::{HttpTransport, ProviderConfig};

/// Pipeline stage that issued a completion. Doubles as the cassette tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Extract,
    Translate,
    Reconstruct,
    Verify,
    Debug,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Extract,
        Stage::Translate,
        Stage::Reconstruct,
        Stage::Verify,
        Stage::Debug,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Translate => "translate",
            Stage::Reconstruct => "reconstruct",
            Stage::Verify => "verify",
            Stage::Debug => "debug",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| GatewayError::Usage(format!("unknown stage `{s}`")))
    }
}

/// Cassette tag for embedding requests.
pub const EMBED_TAG: &str = "embed";

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: Stage,
}

impl CompletionRequest {
    pub fn new(
        tag: Stage,
        prompt: impl Into<String>,
        temperature: f64,
        max_tokens: u32,
    ) -> Result<Self, GatewayError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(GatewayError::Usage("empty prompt".into()));
        }
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(GatewayError::Usage(format!("invalid temperature {temperature}")));
        }
        if max_tokens == 0 {
            return Err(GatewayError::Usage("max_tokens must be positive".into()));
        }
        Ok(Self {
            prompt,
            temperature,
            max_tokens,
            tag,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::Malformed("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GatewayError::Malformed("non-finite embedding component".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = GatewayError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("no recorded response for {tag} request {fingerprint}")]
    ReplayMiss { tag: String, fingerprint: String },
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("gateway has no live transport configured")]
    NoTransport,
}

/// Failure reported by a [`Transport`]. Transient failures are retried.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportError {
    pub message: String,
    pub transient: bool,
}

impl TransportError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            transient: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            transient: false,
        }
    }
}

/// The wire to a provider.
pub trait Transport: Send + Sync {
    fn chat(&self, req: &CompletionRequest) -> Result<String, TransportError>;
    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError>;
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

impl FromStr for GatewayMode {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(GatewayError::Usage(format!("unknown gateway mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Sampling settings per stage. Reconstruction and verification always run
/// at temperature 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub extract_temperature: f64,
    pub translate_temperature: f64,
    pub debug_temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            extract_temperature: 0.0,
            translate_temperature: 0.0,
            debug_temperature: 0.0,
            max_tokens: 4096,
        }
    }
}

impl SamplingConfig {
    pub fn temperature(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Extract => self.extract_temperature,
            Stage::Translate => self.translate_temperature,
            Stage::Debug => self.debug_temperature,
            Stage::Reconstruct | Stage::Verify => 0.0,
        }
    }

    pub fn request(&self, stage: Stage, prompt: String) -> Result<CompletionRequest, GatewayError> {
        CompletionRequest::new(stage, prompt, self.temperature(stage), self.max_tokens)
    }
}

pub struct Gateway {
    mode: GatewayMode,
    cassette: RwLock<Cassette>,
    transport: Option<Box<dyn Transport>>,
    retry: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("has_transport", &self.transport.is_some())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(mode: GatewayMode, cassette: Cassette, transport: Option<Box<dyn Transport>>) -> Self {
        Self {
            mode,
            cassette: RwLock::new(cassette),
            transport,
            retry: RetryPolicy::default(),
        }
    }

    pub fn live(transport: Box<dyn Transport>) -> Self {
        Self::new(GatewayMode::Live, Cassette::new(), Some(transport))
    }

    pub fn record(transport: Box<dyn Transport>, cassette: Cassette) -> Self {
        Self::new(GatewayMode::Record, cassette, Some(transport))
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::new(GatewayMode::Replay, cassette, None)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Copy of the cassette as it stands, including anything recorded so far.
    pub fn cassette(&self) -> Cassette {
        self.cassette.read().expect("cassette lock poisoned").clone()
    }

    pub fn session(&self) -> Session<'_> {
        Session {
            gateway: self,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    fn transport(&self) -> Result<&dyn Transport, GatewayError> {
        self.transport.as_deref().ok_or(GatewayError::NoTransport)
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut(&dyn Transport) -> Result<T, TransportError>,
    ) -> Result<T, GatewayError> {
        let transport = self.transport()?;
        let attempts = self.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match call(transport) {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && attempt + 1 < attempts => {
                    log::warn!("transient provider failure (attempt {}): {}", attempt + 1, e.message);
                    last = e.message;
                    thread::sleep(self.retry.base_delay * 2u32.pow(attempt));
                }
                Err(e) => {
                    return Err(GatewayError::Transport {
                        attempts: attempt + 1,
                        message: e.message,
                    })
                }
            }
        }
        Err(GatewayError::Transport {
            attempts,
            message: last,
        })
    }
}

/// One logical run against a [`Gateway`]. Replay cursors are per session:
/// the n-th identical request in a session gets the n-th recorded response.
pub struct Session<'g> {
    gateway: &'g Gateway,
    cursors: Mutex<HashMap<String, usize>>,
}

impl<'g> Session<'g> {
    pub fn gateway(&self) -> &'g Gateway {
        self.gateway
    }

    /// Routes one exchange according to the gateway mode: replay looks the
    /// response up, record calls `live` and appends, live just calls `live`.
    pub fn exchange<E: From<GatewayError>>(
        &self,
        tag: &str,
        prompt: &str,
        live: impl FnOnce() -> Result<Value, E>,
    ) -> Result<Value, E> {
        match self.gateway.mode {
            GatewayMode::Live => live(),
            GatewayMode::Replay => {
                let fp = fingerprint(tag, prompt);
                let occurrence = {
                    let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
                    let slot = cursors.entry(fp.clone()).or_insert(0);
                    let current = *slot;
                    *slot += 1;
                    current
                };
                let cassette = self.gateway.cassette.read().expect("cassette lock poisoned");
                cassette
                    .lookup(&fp, occurrence)
                    .map(|e| e.response.clone())
                    .ok_or_else(|| {
                        GatewayError::ReplayMiss {
                            tag: tag.to_string(),
                            fingerprint: fp,
                        }
                        .into()
                    })
            }
            GatewayMode::Record => {
                let response = live()?;
                let entry = CassetteEntry::new(tag, prompt, response.clone());
                self.gateway
                    .cassette
                    .write()
                    .expect("cassette lock poisoned")
                    .record(entry)
                    .map_err(E::from)?;
                Ok(response)
            }
        }
    }
}

impl LanguageModel for Session<'_> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let value = self.exchange(req.tag.as_str(), &req.prompt, || {
            self.gateway
                .with_retries(|t| t.chat(req))
                .map(Value::String)
        })?;
        match value {
            Value::String(s) => Ok(s),
            other => Err(GatewayError::Malformed(format!(
                "expected a text response for {}, found {other}",
                req.tag
            ))),
        }
    }
}

impl Embedder for Session<'_> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.is_empty() {
            return Err(GatewayError::Usage("cannot embed empty text".into()));
        }
        let value = self.exchange(EMBED_TAG, text, || {
            let values = self.gateway.with_retries(|t| t.embed(text))?;
            Ok::<_, GatewayError>(serde_json::json!(values))
        })?;
        let values: Vec<f64> = serde_json::from_value(value)
            .map_err(|e| GatewayError::Malformed(format!("embedding: {e}")))?;
        EmbeddingVector::new(values)
    }
}
