//! Prompt templates with `{placeholder}` substitution, and parsing of the
//! fenced answer format every prompt asks for:
//!
//! ```text
//! ANSWER:
//! =====
//! YES
//! =====
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::gateway::Stage;

pub const FENCE: &str = "=====";

pub const HEADER_STRUCTURED_DATA: &str = "STRUCTURED DATA:";
pub const HEADER_CODE: &str = "CODE:";
pub const HEADER_CONSTRAINT: &str = "CONSTRAINT:";
pub const HEADER_ANSWER: &str = "ANSWER:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("response has no `{0}` header")]
    NoHeader(String),
    #[error("no opening {FENCE} after `{0}`")]
    NoOpeningFence(String),
    #[error("no closing {FENCE} after `{0}`")]
    NoClosingFence(String),
    #[error("section `{0}` is empty")]
    EmptyPayload(String),
    #[error("expected YES or NO, found `{0}`")]
    UnexpectedToken(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: Stage,
    body: String,
    required: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(name: Stage, body: impl Into<String>) -> Self {
        let body = body.into();
        let required = placeholders(&body).into_iter().collect();
        Self {
            name,
            body,
            required,
        }
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Substitutes every placeholder in one pass. Bound text is inserted as
    /// is, so braces inside it are never re-expanded.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, RenderError> {
        if let Some(missing) = self
            .required
            .iter()
            .find(|p| !bindings.contains_key(p.as_str()))
        {
            return Err(RenderError::MissingBinding(missing.clone()));
        }
        substitute(&self.body, bindings)
    }
}

/// Single-pass `{placeholder}` substitution over an arbitrary body.
pub fn substitute(body: &str, bindings: &BTreeMap<&str, String>) -> Result<String, RenderError> {
    let mut out = String::with_capacity(body.len() + 256);
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match placeholder_at(after) {
            Some(name) => {
                let value = bindings
                    .get(name)
                    .ok_or_else(|| RenderError::MissingBinding(name.to_string()))?;
                out.push_str(value);
                rest = &after[name.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// `name}` at the start of `s`, where name is lowercase letters/underscores.
fn placeholder_at(s: &str) -> Option<&str> {
    let end = s.find('}')?;
    let name = &s[..end];
    (!name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase() || c == '_')).then_some(name)
}

/// Placeholder names in order of first appearance.
pub fn placeholders(body: &str) -> Vec<String> {
    let mut seen = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        if let Some(name) = placeholder_at(after) {
            if !seen.iter().any(|s: &String| s == name) {
                seen.push(name.to_string());
            }
            rest = &after[name.len() + 1..];
        } else {
            rest = after;
        }
    }
    seen
}

/// One template per stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<Stage, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let pairs = [
            (Stage::Extract, include_str!("../prompts/extract.txt")),
            (Stage::Translate, include_str!("../prompts/translate.txt")),
            (Stage::Reconstruct, include_str!("../prompts/reconstruct.txt")),
            (Stage::Verify, include_str!("../prompts/verify.txt")),
            (Stage::Debug, include_str!("../prompts/debug.txt")),
        ];
        Self {
            templates: pairs
                .into_iter()
                .map(|(stage, body)| (stage, PromptTemplate::new(stage, body)))
                .collect(),
        }
    }

    /// Built-in templates overridden by any `<stage>.txt` found in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::builtin();
        for stage in Stage::ALL {
            let path = dir.join(format!("{}.txt", stage.as_str()));
            if path.exists() {
                let body = fs::read_to_string(&path)?;
                set.templates.insert(stage, PromptTemplate::new(stage, body));
            }
        }
        Ok(set)
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }
}

/// Payload of the first fenced section that follows `header`. Prose before
/// the header and anything after the closing fence are ignored.
pub fn parse_fenced(response: &str, header: &str) -> Result<String, ParseError> {
    let mut search_from = 0;
    let mut saw_header = false;
    while let Some(pos) = response[search_from..].find(header) {
        saw_header = true;
        let after_header = search_from + pos + header.len();
        let rest = &response[after_header..];
        let skipped = rest.len() - rest.trim_start_matches(|c: char| c.is_whitespace() || c == '*').len();
        let candidate = &rest[skipped..];
        if candidate.starts_with(FENCE) {
            let body = candidate.trim_start_matches('=');
            return match body.find(FENCE) {
                Some(end) => Ok(body[..end].trim().to_string()),
                None => Err(ParseError::NoClosingFence(header.to_string())),
            };
        }
        search_from = after_header;
    }
    if saw_header {
        Err(ParseError::NoOpeningFence(header.to_string()))
    } else {
        Err(ParseError::NoHeader(header.to_string()))
    }
}

/// Same as [`parse_fenced`] but an empty section is an error.
pub fn parse_fenced_nonempty(response: &str, header: &str) -> Result<String, ParseError> {
    let payload = parse_fenced(response, header)?;
    if payload.is_empty() {
        Err(ParseError::EmptyPayload(header.to_string()))
    } else {
        Ok(payload)
    }
}

/// Exactly `YES` or `NO` after trimming; lowercase is rejected.
pub fn parse_yes_no(payload: &str) -> Result<bool, ParseError> {
    match payload.trim() {
        "YES" => Ok(true),
        "NO" => Ok(false),
        other => Err(ParseError::UnexpectedToken(other.to_string())),
    }
}

/// A well-formed fenced section, as an agent is asked to emit it.
pub fn emit_fenced(header: &str, payload: &str) -> String {
    format!("{header}\n{FENCE}\n{payload}\n{FENCE}")
}
