//! Datasets, the correctness judge, and aggregate reports over a sweep.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::pipeline::{Runtime, SolveError};
use crate::sandbox::{ExecStatus, ExecutionResult, SandboxError};
use crate::schema::ProblemInstance;
use crate::verifier::VerifyMethod;

pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const DEFAULT_REPEATS: u32 = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset format error: {0}")]
    Format(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("sweep aborted: {0}")]
    Sandbox(SandboxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Difficulty of the public datasets by name; unknown names have none.
pub fn known_difficulty(name: &str) -> Option<Difficulty> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "nl4opt" | "easylp" | "nlp4lp" => Some(Difficulty::Easy),
        "industryor" | "complexlp" | "resocratic" | "complexor" => Some(Difficulty::Hard),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub name: String,
    pub problems: Vec<Arc<ProblemInstance>>,
    pub difficulty: Option<Difficulty>,
}

/// Reads a JSON-lines dataset, one problem per line. Entries without a
/// description are skipped with a warning.
pub fn load_dataset(path: &Path) -> Result<DatasetManifest, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = parse_dataset(&name, &text)?;
    Ok(manifest)
}

pub fn parse_dataset(name: &str, text: &str) -> Result<DatasetManifest, BenchError> {
    let mut problems = Vec::new();
    let mut ids = HashSet::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line)
            .map_err(|e| BenchError::Format(format!("line {line_no}: {e}")))?;
        let has_description = value
            .get("description")
            .and_then(Value::as_str)
            .is_some_and(|d| !d.trim().is_empty());
        if !has_description {
            log::warn!("{name}: line {line_no} has no description, skipped");
            continue;
        }
        let problem: ProblemInstance = serde_json::from_value(value)
            .map_err(|e| BenchError::Format(format!("line {line_no}: {e}")))?;
        problem
            .validate()
            .map_err(|e| BenchError::Format(format!("line {line_no}: {e}")))?;
        if !ids.insert(problem.id.clone()) {
            return Err(BenchError::Format(format!("duplicate id `{}` on line {line_no}", problem.id)));
        }
        problems.push(Arc::new(problem));
    }
    if problems.is_empty() {
        return Err(BenchError::Format(format!("dataset `{name}` has no problems")));
    }
    Ok(DatasetManifest {
        name: name.to_string(),
        problems,
        difficulty: known_difficulty(name),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    ExecError,
    WrongObjective,
    WrongSolution,
    Timeout,
    StageError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeOptions {
    pub rel_tol: f64,
    pub check_solution: bool,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            check_solution: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub correct: bool,
    pub failure_kind: Option<FailureKind>,
}

impl Judgement {
    fn fail(kind: FailureKind) -> Self {
        Self {
            correct: false,
            failure_kind: Some(kind),
        }
    }
}

/// `None` when the problem has no ground-truth objective to judge against.
pub fn judge(result: &ExecutionResult, problem: &ProblemInstance, opts: JudgeOptions) -> Option<Judgement> {
    let truth = problem.ground_truth_objective?;
    let verdict = match result.status {
        ExecStatus::RuntimeError | ExecStatus::ContractViolation => Judgement::fail(FailureKind::ExecError),
        ExecStatus::Timeout => Judgement::fail(FailureKind::Timeout),
        ExecStatus::Infeasible | ExecStatus::Unbounded => Judgement::fail(FailureKind::WrongObjective),
        ExecStatus::Optimal => match result.objective {
            Some(obj) if (obj - truth).abs() <= opts.rel_tol * truth.abs().max(1.0) => {
                if opts.check_solution && !solution_matches(result, problem, opts.rel_tol) {
                    Judgement::fail(FailureKind::WrongSolution)
                } else {
                    Judgement {
                        correct: true,
                        failure_kind: None,
                    }
                }
            }
            _ => Judgement::fail(FailureKind::WrongObjective),
        },
    };
    Some(verdict)
}

fn solution_matches(result: &ExecutionResult, problem: &ProblemInstance, rel_tol: f64) -> bool {
    let Some(truth) = &problem.ground_truth_solution else {
        return true;
    };
    let Some(found) = &result.solution else {
        return false;
    };
    truth
        .iter()
        .all(|(symbol, want)| found.get(symbol).is_some_and(|got| values_close(got, want, rel_tol)))
}

fn values_close(got: &Value, want: &Value, rel_tol: f64) -> bool {
    match (got, want) {
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_close(x, y, rel_tol))
        }
        (a, b) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= rel_tol * y.abs().max(1.0),
            _ => false,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub problem_id: String,
    pub repeat: u32,
    pub correct: bool,
    pub failure_kind: Option<FailureKind>,
    pub corrections: usize,
    pub debug_attempts: u32,
    pub run_time: f64,
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub method: VerifyMethod,
    pub problems: usize,
    pub repeats: u32,
    pub accuracy: f64,
    pub run_time_mean: f64,
    pub run_time_std: f64,
    pub corrections_mean: f64,
    pub corrections_std: f64,
    pub debug_mean: f64,
    pub debug_std: f64,
    pub per_problem: Vec<EvalRecord>,
}

impl BenchReport {
    pub fn from_records(dataset: &str, method: VerifyMethod, problems: usize, repeats: u32, per_problem: Vec<EvalRecord>) -> Self {
        let column = |f: &dyn Fn(&EvalRecord) -> f64| per_problem.iter().map(f).collect::<Vec<_>>();
        let correct = per_problem.iter().filter(|r| r.correct).count();
        let accuracy = if per_problem.is_empty() {
            0.0
        } else {
            correct as f64 / per_problem.len() as f64
        };
        let (run_time_mean, run_time_std) = mean_std(&column(&|r| r.run_time));
        let (corrections_mean, corrections_std) = mean_std(&column(&|r| r.corrections as f64));
        let (debug_mean, debug_std) = mean_std(&column(&|r| r.debug_attempts as f64));
        Self {
            dataset: dataset.to_string(),
            method,
            problems,
            repeats,
            accuracy,
            run_time_mean,
            run_time_std,
            corrections_mean,
            corrections_std,
            debug_mean,
            debug_std,
            per_problem,
        }
    }

    /// The report with every run time zeroed, for comparing sweeps.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.run_time_mean = 0.0;
        r.run_time_std = 0.0;
        for rec in &mut r.per_problem {
            rec.run_time = 0.0;
        }
        r
    }
}

fn method_label(m: VerifyMethod) -> &'static str {
    match m {
        VerifyMethod::Llm => "LLM",
        VerifyMethod::Similarity => "Sim",
    }
}

/// Accuracy, run time, corrections and debugging attempts, one column per report.
pub fn render_table(reports: &[BenchReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Metric".to_string())
        .chain(reports.iter().map(|r| method_label(r.method).to_string()))
        .collect()];
    let metric = |name: &str, f: &dyn Fn(&BenchReport) -> String| {
        std::iter::once(name.to_string()).chain(reports.iter().map(f)).collect::<Vec<_>>()
    };
    rows.push(metric("Accuracy (%)", &|r| format!("{:.1}", r.accuracy * 100.0)));
    rows.push(metric("Run time (s)", &|r| format!("{:.2} ± {:.2}", r.run_time_mean, r.run_time_std)));
    rows.push(metric("Corrections", &|r| format!("{:.2} ± {:.2}", r.corrections_mean, r.corrections_std)));
    rows.push(metric("Debugging", &|r| format!("{:.2} ± {:.2}", r.debug_mean, r.debug_std)));

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if let Some(first) = reports.first() {
        let _ = writeln!(out, "{} ({} problems x {} repeats)", first.dataset, first.problems, first.repeats);
    }
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub parallelism: usize,
    pub repeats: u32,
    pub judge: JudgeOptions,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            parallelism: 1,
            repeats: DEFAULT_REPEATS,
            judge: JudgeOptions::default(),
        }
    }
}

fn evaluate(runtime: &Runtime, problem: &Arc<ProblemInstance>, repeat: u32, cfg: EngineConfig, judge_opts: JudgeOptions) -> Result<EvalRecord, SandboxError> {
    let started = Instant::now();
    let outcome = runtime.solve_with(Arc::clone(problem), cfg);
    let run_time = started.elapsed().as_secs_f64();
    let mut record = EvalRecord {
        problem_id: problem.id.clone(),
        repeat,
        correct: false,
        failure_kind: None,
        corrections: 0,
        debug_attempts: 0,
        run_time,
        objective: None,
        error: None,
    };
    match outcome {
        Ok(out) => {
            record.corrections = out.trace.corrections_total;
            record.debug_attempts = out.trace.debug_attempts;
            record.objective = out.result.objective;
            record.error = out.result.error_text.clone();
            match judge(&out.result, problem, judge_opts) {
                Some(j) => {
                    record.correct = j.correct;
                    record.failure_kind = j.failure_kind;
                }
                None => log::warn!("{}: no ground-truth objective, counted as incorrect", problem.id),
            }
        }
        Err(SolveError::Sandbox(e @ SandboxError::Unavailable(_))) => return Err(e),
        Err(e) => {
            log::warn!("{}: {e}", problem.id);
            record.failure_kind = Some(FailureKind::StageError);
            record.error = Some(e.to_string());
        }
    }
    Ok(record)
}

/// Solves every problem `repeats` times with `cfg`. Records come back in
/// dataset order whatever the parallelism.
pub fn run_bench(runtime: &Runtime, manifest: &DatasetManifest, cfg: EngineConfig, opts: BenchOptions) -> Result<BenchReport, BenchError> {
    if opts.parallelism == 0 {
        return Err(BenchError::Usage("parallelism must be at least 1".into()));
    }
    if opts.repeats == 0 {
        return Err(BenchError::Usage("repeats must be at least 1".into()));
    }
    let tasks: Vec<(u32, &Arc<ProblemInstance>)> = (0..opts.repeats)
        .flat_map(|r| manifest.problems.iter().map(move |p| (r, p)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism)
        .build()
        .map_err(|e| BenchError::Usage(e.to_string()))?;
    let results: Vec<Result<EvalRecord, SandboxError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(r, p)| evaluate(runtime, p, *r, cfg, opts.judge))
            .collect()
    });
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r.map_err(BenchError::Sandbox)?);
    }
    let order: std::collections::HashMap<&str, usize> = manifest
        .problems
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    records.sort_by_key(|r| (order[r.problem_id.as_str()], r.repeat));
    Ok(BenchReport::from_records(
        &manifest.name,
        cfg.verifier.method,
        manifest.problems.len(),
        opts.repeats,
        records,
    ))
}
