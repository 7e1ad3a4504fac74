//! Client side of the program runner protocol. The runner is an external
//! process: it reads one JSON request `{source, data, timeout}` on stdin and
//! answers with one JSON [`ExecutionResult`] line on stdout.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::gateway::{GatewayError, Session};

/// Variable holding the path the program must write its result JSON to.
pub const ENV_RESULT_CONTRACT_PATH: &str = "RESULT_CONTRACT_PATH";
/// Variable holding the path of the problem data file.
pub const ENV_PROBLEM_DATA_PATH: &str = "PROBLEM_DATA_PATH";
pub const EXECUTE_TAG: &str = "execute";
pub const DEFAULT_TIMEOUT_SECS: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxRequest {
    pub source: String,
    pub data: Map<String, Value>,
    /// Seconds.
    pub timeout: f64,
}

impl SandboxRequest {
    pub fn new(source: impl Into<String>, data: Map<String, Value>, timeout: f64) -> Result<Self, SandboxError> {
        let req = Self {
            source: source.into(),
            data,
            timeout,
        };
        if req.source.trim().is_empty() {
            return Err(SandboxError::Usage("program source is empty".into()));
        }
        if !(req.timeout > 0.0 && req.timeout.is_finite()) {
            return Err(SandboxError::Usage(format!("timeout must be positive, got {}", req.timeout)));
        }
        Ok(req)
    }

    /// Key under which a recorded execution is stored. The timeout is left out.
    fn fingerprint_text(&self) -> String {
        format!(
            "{}\n#data {}",
            self.source,
            serde_json::to_string(&self.data).expect("data serializes")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Optimal,
    Infeasible,
    Unbounded,
    RuntimeError,
    Timeout,
    ContractViolation,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Optimal => "optimal",
            ExecStatus::Infeasible => "infeasible",
            ExecStatus::Unbounded => "unbounded",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::ContractViolation => "contract_violation",
        }
    }

    /// Failures the debug loop may try to repair.
    pub fn is_debuggable(self) -> bool {
        matches!(self, ExecStatus::RuntimeError | ExecStatus::ContractViolation)
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default)]
    pub solution: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    pub error_text: Option<String>,
    #[serde(default)]
    pub wall_time: f64,
}

impl ExecutionResult {
    pub fn optimal(objective: f64, solution: BTreeMap<String, Value>) -> Self {
        Self {
            status: ExecStatus::Optimal,
            objective: Some(objective),
            solution: Some(solution),
            error_text: None,
            wall_time: 0.0,
        }
    }

    pub fn failed(status: ExecStatus, error_text: impl Into<String>) -> Self {
        Self {
            status,
            objective: None,
            solution: None,
            error_text: Some(error_text.into()),
            wall_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.status {
            ExecStatus::Optimal if self.objective.is_none() => {
                Err("status optimal without an objective".into())
            }
            ExecStatus::RuntimeError if self.error_text.as_deref().map_or(true, str::is_empty) => {
                Err("status runtime_error without error text".into())
            }
            _ => Ok(()),
        }
    }

    pub fn parse(line: &str) -> Result<Self, SandboxError> {
        let result: Self = serde_json::from_str(line.trim())
            .map_err(|e| SandboxError::Protocol(format!("invalid result line: {e}")))?;
        result.validate().map_err(SandboxError::Protocol)?;
        Ok(result)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("program runner unavailable: {0}")]
    Unavailable(String),
    #[error("program runner protocol error: {0}")]
    Protocol(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub trait Sandbox: Send + Sync {
    /// Failures of the program itself are encoded in the result, never
    /// returned as errors.
    fn execute(&self, req: &SandboxRequest) -> Result<ExecutionResult, SandboxError>;
}

/// Spawns the runner command once per request.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    pub program: String,
    pub args: Vec<String>,
    pub solver: Option<String>,
    /// Extra time the runner gets beyond the request timeout before it is killed.
    pub grace: Duration,
}

impl ProcessRunner {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            solver: None,
            grace: Duration::from_secs(5),
        }
    }

    /// Parses a command line such as `python3 runner.py`.
    pub fn from_command_line(command: &str) -> Result<Self, SandboxError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| SandboxError::Usage("empty runner command".into()))?;
        let mut runner = Self::new(program);
        runner.args = parts.collect();
        Ok(runner)
    }

    pub fn with_solver(mut self, solver: Option<String>) -> Self {
        self.solver = solver;
        self
    }
}

impl Sandbox for ProcessRunner {
    fn execute(&self, req: &SandboxRequest) -> Result<ExecutionResult, SandboxError> {
        let mut command = Command::new(&self.program);
        command.args(&self.args);
        if let Some(solver) = &self.solver {
            command.arg("--solver").arg(solver);
        }
        let started = Instant::now();
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SandboxError::Unavailable(format!("{}: {e}", self.program)))?;

        let body = serde_json::to_string(req).expect("request serializes");
        {
            let mut stdin = child.stdin.take().expect("stdin piped");
            stdin
                .write_all(body.as_bytes())
                .and_then(|_| stdin.write_all(b"\n"))
                .map_err(|e| SandboxError::Protocol(format!("cannot send request: {e}")))?;
        }

        let stdout = child.stdout.take().expect("stdout piped");
        let mut stderr = child.stderr.take().expect("stderr piped");
        let stderr_reader = thread::spawn(move || {
            let mut text = String::new();
            let _ = std::io::Read::read_to_string(&mut stderr, &mut text);
            text
        });
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut line = String::new();
            let read = BufReader::new(stdout).read_line(&mut line).map(|_| line);
            let _ = tx.send(read);
        });

        let deadline = Duration::from_secs_f64(req.timeout) + self.grace;
        let line = match rx.recv_timeout(deadline) {
            Ok(read) => read.map_err(|e| SandboxError::Protocol(format!("cannot read result: {e}")))?,
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                let mut result = ExecutionResult::failed(
                    ExecStatus::Timeout,
                    format!("runner gave no answer within {:.1} s", deadline.as_secs_f64()),
                );
                result.wall_time = started.elapsed().as_secs_f64();
                return Ok(result);
            }
        };
        let status = child
            .wait()
            .map_err(|e| SandboxError::Protocol(format!("cannot wait for runner: {e}")))?;
        if line.trim().is_empty() {
            let stderr = stderr_reader.join().unwrap_or_default();
            return Err(SandboxError::Protocol(format!(
                "runner exited ({status}) without a result line: {}",
                stderr.trim()
            )));
        }
        ExecutionResult::parse(&line)
    }
}

/// Routes executions through the session's cassette so replayed runs need
/// no runner at all.
pub struct RecordedSandbox<'s, 'g> {
    session: &'s Session<'g>,
    inner: Option<&'s dyn Sandbox>,
}

impl<'s, 'g> RecordedSandbox<'s, 'g> {
    pub fn new(session: &'s Session<'g>, inner: Option<&'s dyn Sandbox>) -> Self {
        Self { session, inner }
    }
}

impl Sandbox for RecordedSandbox<'_, '_> {
    fn execute(&self, req: &SandboxRequest) -> Result<ExecutionResult, SandboxError> {
        let value = self.session.exchange(EXECUTE_TAG, &req.fingerprint_text(), || {
            let inner = self
                .inner
                .ok_or_else(|| SandboxError::Unavailable("no program runner configured".into()))?;
            let result = inner.execute(req)?;
            Ok::<_, SandboxError>(serde_json::to_value(result).expect("result serializes"))
        })?;
        let result: ExecutionResult = serde_json::from_value(value)
            .map_err(|e| SandboxError::Protocol(format!("recorded execution: {e}")))?;
        result.validate().map_err(SandboxError::Protocol)?;
        Ok(result)
    }
}
