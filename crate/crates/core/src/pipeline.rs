//! One problem end to end: extract, translate and correct, assemble,
//! execute, and debug when execution fails.

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::agent::Agents;
use crate::assembly::{assemble, debug, AssembledProgram, AssemblyError, DebugError, ExecutionContext, DEFAULT_DEBUG_ATTEMPTS};
use crate::dialect::TargetDialect;
use crate::engine::{Engine, EngineConfig, RunTrace, StageError};
use crate::gateway::{Gateway, SamplingConfig, Stage};
use crate::prompts::PromptSet;
use crate::sandbox::{ExecutionResult, RecordedSandbox, Sandbox, SandboxError, DEFAULT_TIMEOUT_SECS};
use crate::schema::{ProblemInstance, StructuredData};
use crate::translator::extract;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

impl SolveError {
    /// Failures that make every further problem pointless to attempt.
    pub fn is_sandbox_unavailable(&self) -> bool {
        matches!(self, SolveError::Sandbox(SandboxError::Unavailable(_)))
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub structured: StructuredData,
    pub program: AssembledProgram,
    pub result: ExecutionResult,
    pub trace: RunTrace,
}

/// Shared, read-only state for solving any number of problems.
pub struct Runtime {
    pub gateway: Gateway,
    pub sandbox: Option<Box<dyn Sandbox>>,
    pub dialect: TargetDialect,
    pub prompts: PromptSet,
    pub sampling: SamplingConfig,
    pub engine: EngineConfig,
    pub debug_attempts: u32,
    /// Seconds per execution.
    pub timeout: f64,
}

impl Runtime {
    pub fn new(gateway: Gateway, sandbox: Option<Box<dyn Sandbox>>) -> Self {
        Self {
            gateway,
            sandbox,
            dialect: TargetDialect::default_dialect(),
            prompts: PromptSet::builtin(),
            sampling: SamplingConfig::default(),
            engine: EngineConfig::default(),
            debug_attempts: DEFAULT_DEBUG_ATTEMPTS,
            timeout: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn solve(&self, problem: Arc<ProblemInstance>) -> Result<SolveOutcome, SolveError> {
        self.solve_with(problem, self.engine)
    }

    /// Runs with an engine configuration other than the runtime's own, as
    /// the bench does when comparing verifiers.
    pub fn solve_with(&self, problem: Arc<ProblemInstance>, config: EngineConfig) -> Result<SolveOutcome, SolveError> {
        let session = self.gateway.session();
        let agents = Agents::new(&session, &self.prompts, self.sampling);

        let started = Instant::now();
        let s = extract(&agents, Arc::clone(&problem)).map_err(|e| StageError::new(Stage::Extract, 0, None, e))?;
        let extract_secs = started.elapsed().as_secs_f64();

        let engine = Engine::new(agents, &session, &self.dialect, config);
        let mut out = engine.run(&s)?;
        out.trace.wall_times.insert(Stage::Extract.as_str().into(), extract_secs);

        let program = assemble(&out.structured, &out.model)?;
        let sandbox = RecordedSandbox::new(&session, self.sandbox.as_deref());
        let exec = ExecutionContext {
            sandbox: &sandbox,
            problem: &problem,
            timeout: self.timeout,
        };
        let started = Instant::now();
        let result = exec.execute(&program.source)?;
        let (program, result) = if result.status.is_debuggable() && self.debug_attempts > 0 {
            let outcome = debug(&agents, &exec, program, result, self.debug_attempts).map_err(|e| match e {
                DebugError::Sandbox(e) => SolveError::Sandbox(e),
                DebugError::Agent(e) => StageError::new(Stage::Debug, 0, None, e).into(),
                DebugError::NotDebuggable(msg) => {
                    StageError::new(Stage::Debug, 0, None, crate::engine::StageCause::Other(msg)).into()
                }
            })?;
            out.trace.debug_attempts = outcome.attempts;
            (outcome.program, outcome.result)
        } else {
            (program, result)
        };
        out.trace.add_time("execute", started);
        Ok(SolveOutcome {
            structured: out.structured,
            program,
            result,
            trace: out.trace,
        })
    }
}
