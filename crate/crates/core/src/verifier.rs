//! Consistency checks between an original anchor description and the one
//! reconstructed from its code: an LLM judge or embedding cosine against a
//! threshold.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Agents};
use crate::gateway::{Embedder, EmbeddingVector, GatewayError, Stage};
use crate::prompts::{parse_fenced, parse_yes_no, HEADER_ANSWER};

pub const DEFAULT_TAU: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<GatewayError> for VerifyError {
    fn from(e: GatewayError) -> Self {
        VerifyError::Agent(AgentError::Gateway(e))
    }
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, VerifyError> {
    if u.dim() != v.dim() {
        return Err(VerifyError::DimensionMismatch(u.dim(), v.dim()));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.values().iter().zip(v.values()) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(VerifyError::ZeroVector);
    }
    Ok((dot / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMethod {
    Llm,
    #[serde(alias = "sim")]
    Similarity,
}

impl VerifyMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            VerifyMethod::Llm => "llm",
            VerifyMethod::Similarity => "similarity",
        }
    }
}

impl fmt::Display for VerifyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerifyMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(VerifyMethod::Llm),
            "similarity" | "sim" => Ok(VerifyMethod::Similarity),
            other => Err(format!("unknown verifier method `{other}` (expected llm or similarity)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    pub method: VerifyMethod,
    pub tau: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            method: VerifyMethod::Llm,
            tau: DEFAULT_TAU,
        }
    }
}

impl VerifierConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(VerifyError::Usage(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub aligned: bool,
    pub method: VerifyMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Judge payload (`YES`/`NO`) or the rendered score.
    pub raw: String,
}

/// Both variants of the check behind one interface. Embeddings are cached
/// per distinct text for the lifetime of the verifier.
pub struct Verifier<'a> {
    agents: Agents<'a>,
    embedder: &'a dyn Embedder,
    config: VerifierConfig,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<'a> Verifier<'a> {
    pub fn new(agents: Agents<'a>, embedder: &'a dyn Embedder, config: VerifierConfig) -> Self {
        Self {
            agents,
            embedder,
            config,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> VerifierConfig {
        self.config
    }

    pub fn verify(&self, original: &str, reconstructed: &str) -> Result<Verdict, VerifyError> {
        match self.config.method {
            VerifyMethod::Llm => self.verify_llm(original, reconstructed),
            VerifyMethod::Similarity => self.verify_sim(original, reconstructed, self.config.tau),
        }
    }

    pub fn verify_llm(&self, original: &str, reconstructed: &str) -> Result<Verdict, VerifyError> {
        require_text(original, reconstructed)?;
        let bindings = BTreeMap::from([
            ("constraint", original.to_string()),
            ("constraint_new", reconstructed.to_string()),
        ]);
        let aligned = self.agents.ask(Stage::Verify, &bindings, |response| {
            let payload = parse_fenced(response, HEADER_ANSWER)?;
            Ok(parse_yes_no(&payload)?)
        })?;
        Ok(Verdict {
            aligned,
            method: VerifyMethod::Llm,
            score: None,
            raw: if aligned { "YES" } else { "NO" }.to_string(),
        })
    }

    pub fn verify_sim(&self, original: &str, reconstructed: &str, tau: f64) -> Result<Verdict, VerifyError> {
        require_text(original, reconstructed)?;
        VerifierConfig {
            method: VerifyMethod::Similarity,
            tau,
        }
        .validate()?;
        let u = self.embedding(original)?;
        let v = self.embedding(reconstructed)?;
        let score = cosine(&u, &v)?;
        Ok(Verdict {
            aligned: score >= tau,
            method: VerifyMethod::Similarity,
            score: Some(score),
            raw: format!("{score}"),
        })
    }

    fn embedding(&self, text: &str) -> Result<EmbeddingVector, VerifyError> {
        if let Some(v) = self.cache.lock().expect("embedding cache poisoned").get(text) {
            return Ok(v.clone());
        }
        let v = self.embedder.embed(text)?;
        self.cache
            .lock()
            .expect("embedding cache poisoned")
            .insert(text.to_string(), v.clone());
        Ok(v)
    }
}

fn require_text(original: &str, reconstructed: &str) -> Result<(), VerifyError> {
    if original.trim().is_empty() || reconstructed.trim().is_empty() {
        return Err(VerifyError::Usage("both descriptions must be non-empty".into()));
    }
    Ok(())
}
