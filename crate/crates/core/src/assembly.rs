//! Assembly of the final program and the repair loop driven by execution errors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Agents};
use crate::dialect::TargetDialect;
use crate::gateway::Stage;
use crate::prompts::{parse_fenced_nonempty, HEADER_CODE};
use crate::sandbox::{ExecutionResult, Sandbox, SandboxError, SandboxRequest};
use crate::schema::{AnchorId, AnchorKind, ProblemInstance, StructuredData};
use crate::translator::render_simple;

pub const DEFAULT_DEBUG_ATTEMPTS: u32 = 3;

/// Rendered parameter and variable code plus the generated anchor code.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateModel {
    pub simp_fragments: Vec<(String, String)>,
    pub sem_fragments: BTreeMap<AnchorId, String>,
    pub dialect: TargetDialect,
}

impl CandidateModel {
    /// Anchors without code are left out; [`assemble`] reports them.
    pub fn from_structured(s: &StructuredData, dialect: &TargetDialect) -> Self {
        Self {
            simp_fragments: render_simple(s, dialect),
            sem_fragments: s
                .semantic_anchors()
                .iter()
                .filter_map(|a| a.code.clone().map(|c| (a.id, c)))
                .collect(),
            dialect: dialect.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FragmentKey {
    Parameter(String),
    Variable(String),
    Anchor(AnchorId),
}

impl fmt::Display for FragmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FragmentKey::Parameter(s) => write!(f, "parameter {s}"),
            FragmentKey::Variable(s) => write!(f, "variable {s}"),
            FragmentKey::Anchor(id) => write!(f, "anchor {id}"),
        }
    }
}

/// 1-based inclusive line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSpan {
    pub start: usize,
    pub end: usize,
}

impl LineSpan {
    pub fn contains(&self, line: usize) -> bool {
        (self.start..=self.end).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledProgram {
    pub source: String,
    pub dialect: TargetDialect,
    /// Empty once the program has been rewritten by the debug loop.
    pub fragment_spans: BTreeMap<FragmentKey, LineSpan>,
}

impl AssembledProgram {
    /// The fragment a line of the source belongs to, if any.
    pub fn fragment_at(&self, line: usize) -> Option<&FragmentKey> {
        self.fragment_spans
            .iter()
            .find(|(_, span)| span.contains(line))
            .map(|(k, _)| k)
    }

    pub fn count_spans(&self, pred: impl Fn(&FragmentKey) -> bool) -> usize {
        self.fragment_spans.keys().filter(|k| pred(k)).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("anchor {0} has no code")]
    IncompleteModel(AnchorId),
    #[error("model fragments do not match the structured data: {0}")]
    Mismatch(String),
}

struct Builder {
    source: String,
    line: usize,
    spans: BTreeMap<FragmentKey, LineSpan>,
}

impl Builder {
    fn raw(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        let text = if text.ends_with('\n') {
            text.to_string()
        } else {
            format!("{text}\n")
        };
        self.line += text.matches('\n').count();
        self.source.push_str(&text);
    }

    fn fragment(&mut self, key: FragmentKey, code: &str) {
        let start = self.line + 1;
        self.source.push_str(code);
        self.source.push('\n');
        self.line += code.matches('\n').count() + 1;
        self.spans.insert(key, LineSpan { start, end: self.line });
    }
}

pub fn assemble(s: &StructuredData, m: &CandidateModel) -> Result<AssembledProgram, AssemblyError> {
    let anchors = s.semantic_anchors();
    if let Some(missing) = anchors.iter().find(|a| !m.sem_fragments.contains_key(&a.id)) {
        return Err(AssemblyError::IncompleteModel(missing.id));
    }
    if let Some(extra) = m.sem_fragments.keys().find(|id| s.anchor(**id).is_none()) {
        return Err(AssemblyError::Mismatch(format!("unknown anchor {extra}")));
    }
    let n_params = s.parameters.len();
    if m.simp_fragments.len() != n_params + s.variables.len() {
        return Err(AssemblyError::Mismatch(format!(
            "{} rendered fragments for {} parameters and {} variables",
            m.simp_fragments.len(),
            n_params,
            s.variables.len()
        )));
    }

    let mut b = Builder {
        source: String::new(),
        line: 0,
        spans: BTreeMap::new(),
    };
    b.raw(&m.dialect.boilerplate_header);
    b.raw("\n# Parameters");
    for (i, (symbol, code)) in m.simp_fragments.iter().enumerate() {
        let key = if i < n_params {
            FragmentKey::Parameter(symbol.clone())
        } else {
            if i == n_params {
                b.raw("\n# Variables");
            }
            FragmentKey::Variable(symbol.clone())
        };
        b.fragment(key, code);
    }
    for anchor in anchors {
        let label = match anchor.kind {
            AnchorKind::Constraint => format!("\n# Constraint {}", anchor.id),
            AnchorKind::Objective => "\n# Objective".to_string(),
        };
        b.raw(&label);
        b.fragment(FragmentKey::Anchor(anchor.id), &m.sem_fragments[&anchor.id]);
    }
    b.raw("\n");
    b.raw(&m.dialect.render_footer(&s.variables));
    Ok(AssembledProgram {
        source: b.source,
        dialect: m.dialect.clone(),
        fragment_spans: b.spans,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebugError {
    #[error("debugging only applies to runtime errors and contract violations, not `{0}`")]
    NotDebuggable(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebugOutcome {
    pub program: AssembledProgram,
    pub result: ExecutionResult,
    pub attempts: u32,
}

/// Everything one execution needs besides the program.
pub struct ExecutionContext<'a> {
    pub sandbox: &'a dyn Sandbox,
    pub problem: &'a ProblemInstance,
    pub timeout: f64,
}

impl ExecutionContext<'_> {
    pub fn execute(&self, source: &str) -> Result<ExecutionResult, SandboxError> {
        let req = SandboxRequest::new(source, self.problem.data.clone(), self.timeout)?;
        self.sandbox.execute(&req)
    }
}

/// Asks for a corrected whole program and re-executes it, at most
/// `max_attempts` times, stopping as soon as the failure is not one the
/// loop can repair.
pub fn debug(
    agents: &Agents<'_>,
    exec: &ExecutionContext<'_>,
    program: AssembledProgram,
    result: ExecutionResult,
    max_attempts: u32,
) -> Result<DebugOutcome, DebugError> {
    if !result.status.is_debuggable() {
        return Err(DebugError::NotDebuggable(result.status.to_string()));
    }
    let mut outcome = DebugOutcome {
        program,
        result,
        attempts: 0,
    };
    while outcome.attempts < max_attempts && outcome.result.status.is_debuggable() {
        let error_message = match outcome.result.error_text.as_deref() {
            Some(text) if !text.trim().is_empty() => text.to_string(),
            _ => "The program finished without writing its result file.".to_string(),
        };
        let bindings = BTreeMap::from([
            ("description", exec.problem.description.clone()),
            ("solver", outcome.program.dialect.name.clone()),
            ("program", outcome.program.source.clone()),
            ("error_message", error_message),
        ]);
        let source = agents.ask(Stage::Debug, &bindings, |response| {
            let code = parse_fenced_nonempty(response, HEADER_CODE)?;
            Ok(strip_python_block(&code))
        })?;
        outcome.attempts += 1;
        log::info!("{}: debug attempt {}", exec.problem.id, outcome.attempts);
        outcome.result = exec.execute(&source)?;
        outcome.program = AssembledProgram {
            source,
            dialect: outcome.program.dialect.clone(),
            fragment_spans: BTreeMap::new(),
        };
    }
    Ok(outcome)
}

fn strip_python_block(code: &str) -> String {
    let t = code.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let body = rest.split_once('\n').map_or("", |(_, b)| b);
            body.trim_end().strip_suffix("```").unwrap_or(body).trim_end().to_string() + "\n"
        }
        None => format!("{t}\n"),
    }
}
