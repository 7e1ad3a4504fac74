//! JSON-lines interaction log used to record and replay agent traffic.
//!
//! Each line is one exchange:
//! `{"fingerprint": "...", "tag": "translate", "prompt_sha": "...", "response": ...}`.
//! The response is a string for completions, an array of numbers for
//! embeddings and an object for recorded program executions.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::GatewayError;

/// Line endings become `\n`, trailing whitespace is dropped from every line
/// and from the end of the text. Nothing else is touched.
pub fn normalize_prompt(prompt: &str) -> String {
    let unified = prompt.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.lines().map(str::trim_end).collect();
    let mut out = lines.join("\n");
    let keep = out.trim_end().len();
    out.truncate(keep);
    out
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Hash of the stage tag and the normalized prompt. Sampling settings are
/// deliberately left out.
pub fn fingerprint(tag: &str, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize_prompt(prompt).as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub tag: String,
    pub prompt_sha: String,
    pub response: Value,
}

impl CassetteEntry {
    pub fn new(tag: &str, prompt: &str, response: Value) -> Self {
        Self {
            fingerprint: fingerprint(tag, prompt),
            tag: tag.to_string(),
            prompt_sha: sha256_hex(&normalize_prompt(prompt)),
            response,
        }
    }
}

/// Recorded exchanges, indexed by fingerprint. Several entries may share a
/// fingerprint when the same prompt was issued more than once; replay serves
/// them in recorded order and keeps repeating the last one.
#[derive(Debug, Default, Clone)]
pub struct Cassette {
    entries: Vec<CassetteEntry>,
    index: HashMap<String, Vec<usize>>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads a cassette file. The path is remembered so that later
    /// recordings are appended to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let mut cassette = Self::parse(&text)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        cassette.path = Some(path.to_path_buf());
        Ok(cassette)
    }

    /// Opens `path` for recording, creating an empty file when absent.
    pub fn open_or_create(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        if path.exists() {
            return Self::load(path);
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", parent.display())))?;
        }
        fs::write(path, "").map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cassette = Self::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            cassette.push_entry(entry);
        }
        Ok(cassette)
    }

    fn push_entry(&mut self, entry: CassetteEntry) {
        self.index
            .entry(entry.fingerprint.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push(entry);
    }

    /// Appends in memory and, when backed by a file, to the file.
    pub fn record(&mut self, entry: CassetteEntry) -> Result<(), GatewayError> {
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).expect("cassette entry serializes");
            let mut file = OpenOptions::new()
                .append(true)
                .create(true)
                .open(path)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
            writeln!(file, "{line}")
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        }
        self.push_entry(entry);
        Ok(())
    }

    /// Response number `occurrence` for `fingerprint`, clamped to the last
    /// recorded one.
    pub fn lookup(&self, fingerprint: &str, occurrence: usize) -> Option<&CassetteEntry> {
        let slots = self.index.get(fingerprint)?;
        let slot = slots.get(occurrence).or_else(|| slots.last())?;
        self.entries.get(*slot)
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("cassette entry serializes") + "\n")
            .collect()
    }

    /// Entry counts per tag, sorted by tag.
    pub fn tag_counts(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in &self.entries {
            *counts.entry(e.tag.as_str()).or_default() += 1;
        }
        let mut out: Vec<_> = counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        out.sort();
        out
    }
}
