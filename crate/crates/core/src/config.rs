//! TOML configuration and construction of a [`Runtime`] from it.
//!
//! ```toml
//! dialect = "gurobipy"
//!
//! [gateway]
//! mode = "replay"
//! cassette = "fixtures/run.jsonl"
//!
//! [verifier]
//! method = "similarity"
//! tau = 0.75
//!
//! [sandbox]
//! command = "python3 runner.py"
//! solver = "cbc"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::DEFAULT_DEBUG_ATTEMPTS;
use crate::bench::{DEFAULT_REL_TOL, DEFAULT_REPEATS};
use crate::dialect::TargetDialect;
use crate::engine::{EngineConfig, DEFAULT_T_MAX};
use crate::gateway::{Cassette, Gateway, GatewayMode, HttpTransport, ProviderConfig, SamplingConfig};
use crate::pipeline::Runtime;
use crate::prompts::PromptSet;
use crate::sandbox::{ProcessRunner, Sandbox, DEFAULT_TIMEOUT_SECS};
use crate::verifier::VerifierConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub mode: GatewayMode,
    pub cassette: Option<PathBuf>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            mode: GatewayMode::Live,
            cassette: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineSettings {
    pub t_max: u32,
    pub freeze_aligned: bool,
}

impl Default for EngineSettings {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            freeze_aligned: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebugSettings {
    pub attempts: u32,
    pub timeout_secs: f64,
}

impl Default for DebugSettings {
    fn default() -> Self {
        Self {
            attempts: DEFAULT_DEBUG_ATTEMPTS,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxSettings {
    /// Runner command line; no runner means executions can only be replayed.
    pub command: Option<String>,
    pub solver: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub parallel: usize,
    pub repeats: u32,
    pub rel_tol: f64,
    pub check_solution: bool,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            parallel: 1,
            repeats: DEFAULT_REPEATS,
            rel_tol: DEFAULT_REL_TOL,
            check_solution: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    /// Built-in dialect name or path to a dialect JSON file.
    pub dialect: String,
    /// Directory of `<stage>.txt` files overriding the built-in prompts.
    pub prompts_dir: Option<PathBuf>,
    pub provider: ProviderConfig,
    pub gateway: GatewaySettings,
    pub engine: EngineSettings,
    pub verifier: VerifierConfig,
    pub debug: DebugSettings,
    pub sandbox: SandboxSettings,
    pub sampling: SamplingConfig,
    pub bench: BenchSettings,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            dialect: "gurobipy".into(),
            prompts_dir: None,
            provider: ProviderConfig::default(),
            gateway: GatewaySettings::default(),
            engine: EngineSettings::default(),
            verifier: VerifierConfig::default(),
            debug: DebugSettings::default(),
            sandbox: SandboxSettings::default(),
            sampling: SamplingConfig::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.display().to_string(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            t_max: self.engine.t_max,
            verifier: self.verifier,
            freeze_aligned: self.engine.freeze_aligned,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine_config().validate().map_err(ConfigError::Invalid)?;
        if self.gateway.mode == GatewayMode::Replay && self.gateway.cassette.is_none() {
            return Err(ConfigError::Invalid("replay mode needs a cassette path".into()));
        }
        if self.gateway.mode == GatewayMode::Record && self.gateway.cassette.is_none() {
            return Err(ConfigError::Invalid("record mode needs a cassette path".into()));
        }
        if !(self.debug.timeout_secs > 0.0) {
            return Err(ConfigError::Invalid("debug.timeout_secs must be positive".into()));
        }
        if self.bench.parallel == 0 || self.bench.repeats == 0 {
            return Err(ConfigError::Invalid("bench.parallel and bench.repeats must be at least 1".into()));
        }
        if !(self.bench.rel_tol >= 0.0) {
            return Err(ConfigError::Invalid("bench.rel_tol must be non-negative".into()));
        }
        Ok(())
    }

    fn gateway(&self) -> Result<Gateway, ConfigError> {
        let transport = || -> Result<HttpTransport, ConfigError> {
            let mut provider = self.provider.clone();
            provider.apply_env();
            HttpTransport::new(provider).map_err(|e| ConfigError::Invalid(e.message))
        };
        let invalid = |e: crate::gateway::GatewayError| ConfigError::Invalid(e.to_string());
        Ok(match self.gateway.mode {
            GatewayMode::Live => Gateway::live(Box::new(transport()?)),
            GatewayMode::Replay => {
                let path = self.gateway.cassette.as_ref().expect("validated");
                Gateway::replay(Cassette::load(path).map_err(invalid)?)
            }
            GatewayMode::Record => {
                let path = self.gateway.cassette.as_ref().expect("validated");
                Gateway::record(Box::new(transport()?), Cassette::open_or_create(path).map_err(invalid)?)
            }
        })
    }

    pub fn build_runtime(&self) -> Result<Runtime, ConfigError> {
        self.validate()?;
        let sandbox: Option<Box<dyn Sandbox>> = match &self.sandbox.command {
            Some(cmd) => Some(Box::new(
                ProcessRunner::from_command_line(cmd)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?
                    .with_solver(self.sandbox.solver.clone()),
            )),
            None => None,
        };
        let mut runtime = Runtime::new(self.gateway()?, sandbox);
        runtime.dialect = TargetDialect::resolve(&self.dialect).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(dir) = &self.prompts_dir {
            runtime.prompts = PromptSet::from_dir(dir).map_err(|e| ConfigError::Invalid(format!("{}: {e}", dir.display())))?;
        }
        runtime.sampling = self.sampling;
        runtime.engine = self.engine_config();
        runtime.debug_attempts = self.debug.attempts;
        runtime.timeout = self.debug.timeout_secs;
        Ok(runtime)
    }
}
