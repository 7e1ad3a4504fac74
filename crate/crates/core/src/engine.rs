//! The correction loop: translate every anchor, then repeatedly reconstruct
//! descriptions from code, verify them against the originals and regenerate
//! only the anchors that failed, until none fail or the iteration cap hits.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, Agents};
use crate::assembly::CandidateModel;
use crate::dialect::TargetDialect;
use crate::gateway::{Embedder, Stage};
use crate::prompts::{parse_fenced_nonempty, HEADER_CONSTRAINT};
use crate::schema::{identifiers, Anchor, AnchorId, AnchorStatus, SchemaError, StructuredData};
use crate::translator::{parameter_listing, translate_anchor, variable_listing};
use crate::verifier::{Verifier, VerifierConfig, VerifyError, VerifyMethod};

pub const DEFAULT_T_MAX: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub t_max: u32,
    pub verifier: VerifierConfig,
    /// Skip re-checking anchors that already verified and were not touched.
    pub freeze_aligned: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_T_MAX,
            verifier: VerifierConfig::default(),
            freeze_aligned: true,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.t_max < 1 {
            return Err("t_max must be at least 1".into());
        }
        self.verifier.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageCause {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage failed (iteration {t}{}): {cause}", .anchor.map(|a| format!(", anchor {a}")).unwrap_or_default())]
pub struct StageError {
    pub stage: Stage,
    pub t: u32,
    pub anchor: Option<AnchorId>,
    #[source]
    pub cause: StageCause,
}

impl StageError {
    pub fn new(stage: Stage, t: u32, anchor: Option<AnchorId>, cause: impl Into<StageCause>) -> Self {
        Self {
            stage,
            t,
            anchor,
            cause: cause.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Translated,
    Reconstructed,
    Verified,
    Regenerated,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Translated => "translated",
            EventKind::Reconstructed => "reconstructed",
            EventKind::Verified => "verified",
            EventKind::Regenerated => "regenerated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEvent {
    pub t: u32,
    pub anchor: AnchorId,
    pub event: EventKind,
    pub detail: String,
}

/// What happened during one run. `error_set_sizes[k]` is |E| at iteration k+1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunTrace {
    pub problem_id: String,
    pub method: Option<VerifyMethod>,
    pub t_max: u32,
    pub error_set_sizes: Vec<usize>,
    pub error_sets: Vec<Vec<AnchorId>>,
    pub anchor_events: Vec<AnchorEvent>,
    pub corrections_total: usize,
    /// Anchors still failing when the iteration cap was reached.
    pub residual_errors: Vec<AnchorId>,
    pub debug_attempts: u32,
    /// Seconds per stage. Never compared between runs.
    pub wall_times: BTreeMap<String, f64>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid trace JSON in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.error_set_sizes.len()
    }

    pub fn converged(&self) -> bool {
        self.residual_errors.is_empty()
    }

    pub fn count_events(&self, kind: EventKind) -> usize {
        self.anchor_events.iter().filter(|e| e.event == kind).count()
    }

    /// The trace with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self {
            wall_times: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn add_time(&mut self, stage: &str, started: Instant) {
        *self.wall_times.entry(stage.to_string()).or_default() += started.elapsed().as_secs_f64();
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json_pretty() + "\n")
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| TraceError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// Plot data: one `iteration,error_count` row per correction iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,error_count\n");
        for (i, n) in self.error_set_sizes.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, n));
        }
        out
    }
}

/// Code of every anchor around one correction iteration.
#[derive(Debug, Clone)]
pub struct IterationSnapshot {
    pub t: u32,
    pub error_set: Vec<AnchorId>,
    pub before: Vec<Option<String>>,
    pub after: Vec<Option<String>>,
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub model: CandidateModel,
    pub trace: RunTrace,
    /// The input with anchors carrying their final code, flags and history.
    pub structured: StructuredData,
}

pub struct Engine<'a> {
    agents: Agents<'a>,
    verifier: Verifier<'a>,
    dialect: &'a TargetDialect,
    config: EngineConfig,
}

impl<'a> Engine<'a> {
    pub fn new(
        agents: Agents<'a>,
        embedder: &'a dyn Embedder,
        dialect: &'a TargetDialect,
        config: EngineConfig,
    ) -> Self {
        Self {
            agents,
            verifier: Verifier::new(agents, embedder, config.verifier),
            dialect,
            config,
        }
    }

    pub fn run(&self, s: &StructuredData) -> Result<EngineOutput, StageError> {
        self.run_observed(s, &mut |_| {})
    }

    pub fn run_observed(
        &self,
        s: &StructuredData,
        observer: &mut dyn FnMut(&IterationSnapshot),
    ) -> Result<EngineOutput, StageError> {
        self.config
            .validate()
            .map_err(|e| StageError::new(Stage::Verify, 0, None, StageCause::Other(e)))?;
        let mut anchors: Vec<Anchor> = s.semantic_anchors().to_vec();
        let mut trace = RunTrace {
            problem_id: s.problem.id.clone(),
            method: Some(self.config.verifier.method),
            t_max: self.config.t_max,
            ..RunTrace::default()
        };

        for anchor in anchors.iter_mut() {
            self.translate(anchor, s, 0, EventKind::Translated, &mut trace)?;
        }

        for t in 1..=self.config.t_max {
            let candidates: Vec<usize> = (0..anchors.len())
                .filter(|&i| !(self.config.freeze_aligned && anchors[i].status() == AnchorStatus::Aligned))
                .collect();
            let mut error_set = Vec::new();
            for &i in &candidates {
                if !self.check(&mut anchors[i], s, t, &mut trace)? {
                    error_set.push(i);
                }
            }
            let ids: Vec<AnchorId> = error_set.iter().map(|&i| anchors[i].id).collect();
            trace.error_set_sizes.push(ids.len());
            trace.error_sets.push(ids.clone());
            log::info!("{}: iteration {t}, {} misaligned anchor(s)", s.problem.id, ids.len());
            if ids.is_empty() {
                trace.residual_errors.clear();
                break;
            }
            let before = codes(&anchors);
            for &i in &error_set {
                self.translate(&mut anchors[i], s, t, EventKind::Regenerated, &mut trace)?;
                trace.corrections_total += 1;
            }
            observer(&IterationSnapshot {
                t,
                error_set: ids.clone(),
                before,
                after: codes(&anchors),
            });
            trace.residual_errors = ids;
        }

        let structured = s
            .with_anchors(anchors)
            .map_err(|e| StageError::new(Stage::Translate, self.config.t_max, None, e))?;
        let model = CandidateModel::from_structured(&structured, self.dialect);
        Ok(EngineOutput {
            model,
            trace,
            structured,
        })
    }

    fn translate(
        &self,
        anchor: &mut Anchor,
        s: &StructuredData,
        t: u32,
        event: EventKind,
        trace: &mut RunTrace,
    ) -> Result<(), StageError> {
        let started = Instant::now();
        let code = translate_anchor(&self.agents, anchor, s, self.dialect)
            .map_err(|e| StageError::new(Stage::Translate, t, Some(anchor.id), e))?;
        trace.add_time(Stage::Translate.as_str(), started);
        anchor.set_code(code.clone());
        anchor.push_history(t, event.as_str(), code.clone());
        trace.anchor_events.push(AnchorEvent {
            t,
            anchor: anchor.id,
            event,
            detail: code,
        });
        Ok(())
    }

    /// Reconstructs and verifies one anchor; `true` when aligned.
    fn check(&self, anchor: &mut Anchor, s: &StructuredData, t: u32, trace: &mut RunTrace) -> Result<bool, StageError> {
        let started = Instant::now();
        let recon = reconstruct_anchor(&self.agents, anchor, s, self.dialect)
            .map_err(|e| StageError::new(Stage::Reconstruct, t, Some(anchor.id), e))?;
        trace.add_time(Stage::Reconstruct.as_str(), started);
        anchor.reconstructed = Some(recon.clone());
        anchor.push_history(t, EventKind::Reconstructed.as_str(), recon.clone());
        trace.anchor_events.push(AnchorEvent {
            t,
            anchor: anchor.id,
            event: EventKind::Reconstructed,
            detail: recon.clone(),
        });

        let started = Instant::now();
        let verdict = self
            .verifier
            .verify(&anchor.description, &recon)
            .map_err(|e| StageError::new(Stage::Verify, t, Some(anchor.id), e))?;
        trace.add_time(Stage::Verify.as_str(), started);
        if !anchor.record_verdict(verdict.aligned) {
            log::debug!("anchor {} reopened at iteration {t}", anchor.id);
        }
        let detail = if verdict.aligned { "aligned" } else { "misaligned" };
        let detail = format!("{detail} ({})", verdict.raw);
        anchor.push_history(t, EventKind::Verified.as_str(), detail.clone());
        trace.anchor_events.push(AnchorEvent {
            t,
            anchor: anchor.id,
            event: EventKind::Verified,
            detail,
        });
        Ok(verdict.aligned)
    }
}

fn codes(anchors: &[Anchor]) -> Vec<Option<String>> {
    anchors.iter().map(|a| a.code.clone()).collect()
}

/// Describes what the anchor's code does, with the description of the
/// anchor given only as a model of structure and length.
pub fn reconstruct_anchor(
    agents: &Agents<'_>,
    anchor: &Anchor,
    context: &StructuredData,
    dialect: &TargetDialect,
) -> Result<String, AgentError> {
    let code = anchor
        .code
        .as_deref()
        .ok_or_else(|| AgentError::Usage(format!("anchor {} has no code to reconstruct from", anchor.id)))?;
    let used: HashSet<String> = identifiers(code).into_iter().collect();
    let bindings = BTreeMap::from([
        ("description", context.problem.description.clone()),
        ("solver", dialect.name.clone()),
        ("constraint", anchor.description.clone()),
        ("constraint_code", code.to_string()),
        (
            "params",
            parameter_listing(context.parameters.iter().filter(|p| used.contains(&p.symbol))),
        ),
        (
            "vars",
            variable_listing(context.variables.iter().filter(|v| used.contains(&v.symbol))),
        ),
    ]);
    agents.ask(Stage::Reconstruct, &bindings, |response| {
        Ok(parse_fenced_nonempty(response, HEADER_CONSTRAINT)?)
    })
}
