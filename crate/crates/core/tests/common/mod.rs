//! Scripted provider and runner used to record the replay fixtures, plus
//! helpers shared by the integration tests.
//!
//! A [`World`] knows, for every anchor of every scripted problem, the code
//! each successive translation returns, the description reconstructed from
//! each code version and whether that description should verify. Embeddings
//! are engineered: an original description is a unit basis vector, and a
//! reconstruction is the same vector (cosine 1), `e + n1 + n2 + n3` (cosine
//! exactly 0.5) or `4e + 3n1` (cosine 0.8).

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anchoropt_core::agent::Agents;
use anchoropt_core::engine::{Engine, EngineConfig, EngineOutput};
use anchoropt_core::gateway::{
    Cassette, CompletionRequest, Gateway, GatewayMode, SamplingConfig, Stage, Transport, TransportError,
};
use anchoropt_core::pipeline::Runtime;
use anchoropt_core::prompts::{emit_fenced, PromptSet, HEADER_ANSWER, HEADER_CODE, HEADER_CONSTRAINT, HEADER_STRUCTURED_DATA};
use anchoropt_core::sandbox::{ExecStatus, ExecutionResult, Sandbox, SandboxError, SandboxRequest};
use anchoropt_core::schema::ProblemInstance;
use anchoropt_core::translator::extract;
use anchoropt_core::verifier::{VerifierConfig, VerifyMethod};
use anchoropt_core::dialect::TargetDialect;
use serde_json::{json, Value};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn cassette_path(name: &str) -> PathBuf {
    fixtures_dir().join("cassettes").join(format!("{name}.jsonl"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sim {
    Same,
    Half,
    Close,
}

#[derive(Debug, Clone)]
pub struct Version {
    pub code: String,
    pub recon: String,
    pub llm_aligned: bool,
    pub sim: Sim,
}

pub fn version(code: &str, recon: &str, llm_aligned: bool, sim: Sim) -> Version {
    Version {
        code: code.to_string(),
        recon: recon.to_string(),
        llm_aligned,
        sim,
    }
}

#[derive(Debug, Clone)]
pub struct AnchorScript {
    pub description: String,
    /// The n-th translation returns `versions[min(n, last)]`.
    pub versions: Vec<Version>,
}

#[derive(Debug, Clone)]
pub struct ProblemScript {
    pub problem: ProblemInstance,
    pub structured: Value,
    pub anchors: Vec<AnchorScript>,
    /// Program substring → recorded execution result; first match wins.
    pub executions: Vec<(String, ExecutionResult)>,
}

impl ProblemScript {
    pub fn problem(&self) -> Arc<ProblemInstance> {
        Arc::new(self.problem.clone())
    }
}

#[derive(Debug, Default)]
pub struct World {
    pub problems: Vec<ProblemScript>,
    originals: HashMap<String, usize>,
    recons: HashMap<String, (usize, Sim, bool)>,
    codes: HashMap<String, String>,
    translations: HashMap<String, Vec<String>>,
    dim: usize,
}

impl World {
    pub fn new(problems: Vec<ProblemScript>) -> Arc<Self> {
        let mut w = World {
            problems,
            ..World::default()
        };
        let mut k = 0;
        for p in &w.problems {
            for a in &p.anchors {
                assert!(w.originals.insert(a.description.clone(), k).is_none(), "duplicate anchor text");
                for v in &a.versions {
                    w.recons.insert(v.recon.clone(), (k, v.sim, v.llm_aligned));
                    w.codes.insert(v.code.clone(), v.recon.clone());
                }
                w.translations
                    .insert(a.description.clone(), a.versions.iter().map(|v| v.code.clone()).collect());
                k += 1;
            }
        }
        w.dim = k + 3;
        Arc::new(w)
    }

    fn problem_for(&self, prompt: &str) -> &ProblemScript {
        self.problems
            .iter()
            .find(|p| prompt.contains(&p.problem.description))
            .unwrap_or_else(|| panic!("prompt matches no scripted problem"))
    }

    pub fn embedding(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let noise = self.dim - 3;
        if let Some(&k) = self.originals.get(text) {
            v[k] = 1.0;
        } else if let Some(&(k, sim, _)) = self.recons.get(text) {
            match sim {
                Sim::Same => v[k] = 1.0,
                Sim::Half => {
                    v[k] = 1.0;
                    v[noise] = 1.0;
                    v[noise + 1] = 1.0;
                    v[noise + 2] = 1.0;
                }
                Sim::Close => {
                    v[k] = 4.0;
                    v[noise] = 3.0;
                }
            }
        } else {
            panic!("no scripted embedding for {text:?}");
        }
        v
    }

    pub fn execution(&self, source: &str) -> ExecutionResult {
        if source.contains("addConstraint(") {
            return ExecutionResult::failed(
                ExecStatus::RuntimeError,
                "Traceback (most recent call last):\n  File \"program.py\", line 31, in <module>\nAttributeError: 'Model' object has no attribute 'addConstraint'",
            );
        }
        for p in &self.problems {
            for (marker, result) in &p.executions {
                if source.contains(marker.as_str()) {
                    return result.clone();
                }
            }
        }
        ExecutionResult {
            status: ExecStatus::ContractViolation,
            objective: None,
            solution: None,
            error_text: None,
            wall_time: 0.0,
        }
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
    let from = text.find(start).unwrap_or_else(|| panic!("marker {start:?} missing")) + start.len();
    let rest = &text[from..];
    let to = rest.find(end).unwrap_or_else(|| panic!("marker {end:?} missing"));
    &rest[..to]
}

/// Answers every request from the world's tables. Translation counters
/// live here, so one transport serves one scripted run.
pub struct WorldTransport {
    world: Arc<World>,
    translated: Mutex<HashMap<String, usize>>,
}

impl WorldTransport {
    pub fn new(world: Arc<World>) -> Self {
        Self {
            world,
            translated: Mutex::new(HashMap::new()),
        }
    }
}

impl Transport for WorldTransport {
    fn chat(&self, req: &CompletionRequest) -> Result<String, TransportError> {
        let p = &req.prompt;
        let answer = match req.tag {
            Stage::Extract => {
                let script = self.world.problem_for(p);
                let body = serde_json::to_string_pretty(&script.structured).unwrap();
                format!("Here is the structured data.\n\n{}", emit_fenced(HEADER_STRUCTURED_DATA, &body))
            }
            Stage::Translate => {
                let desc = between(p, "The description to implement is:\n\n-----\n", "\n-----");
                let versions = &self.world.translations[desc];
                let mut counts = self.translated.lock().unwrap();
                let n = counts.entry(desc.to_string()).or_insert(0);
                let code = &versions[(*n).min(versions.len() - 1)];
                *n += 1;
                emit_fenced(HEADER_CODE, code)
            }
            Stage::Reconstruct => {
                let code = between(p, "Here is the code for the constraint:\n\n-----\n", "\n-----");
                let recon = &self.world.codes[code];
                format!(
                    "The code sums the relevant terms and compares them with the bound.\n\n{}",
                    emit_fenced(HEADER_CONSTRAINT, recon)
                )
            }
            Stage::Verify => {
                let new = between(p, "The new description is:\n-----\n", "\n-----");
                let (_, _, aligned) = self.world.recons[new];
                emit_fenced(HEADER_ANSWER, if aligned { "YES" } else { "NO" })
            }
            Stage::Debug => {
                let program = between(p, "was written for this problem:\n\n-----\n", "\n-----\n\nRunning the program failed");
                emit_fenced(HEADER_CODE, &program.replace("addConstraint(", "addConstr("))
            }
        };
        Ok(answer)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, TransportError> {
        Ok(self.world.embedding(text))
    }
}

/// Runner stand-in that answers from the world's execution table.
pub struct StubSandbox(pub Arc<World>);

impl Sandbox for StubSandbox {
    fn execute(&self, req: &SandboxRequest) -> Result<ExecutionResult, SandboxError> {
        Ok(self.0.execution(&req.source))
    }
}

/// A transport that fails every call; replay must never reach it.
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn chat(&self, req: &CompletionRequest) -> Result<String, TransportError> {
        panic!("network access during replay ({})", req.tag)
    }

    fn embed(&self, _text: &str) -> Result<Vec<f64>, TransportError> {
        panic!("network access during replay (embed)")
    }
}

pub fn replay_gateway(name: &str) -> Gateway {
    let cassette = Cassette::load(cassette_path(name)).expect("fixture cassette");
    Gateway::new(GatewayMode::Replay, cassette, Some(Box::new(NoNetwork)))
}

pub fn engine_config(method: VerifyMethod) -> EngineConfig {
    EngineConfig {
        verifier: VerifierConfig {
            method,
            ..VerifierConfig::default()
        },
        ..EngineConfig::default()
    }
}

/// Extract plus the correction loop, without assembly or execution.
pub fn run_engine(gateway: &Gateway, problem: Arc<ProblemInstance>, cfg: EngineConfig) -> EngineOutput {
    let session = gateway.session();
    let prompts = PromptSet::builtin();
    let agents = Agents::new(&session, &prompts, SamplingConfig::default());
    let s = extract(&agents, problem).expect("extract");
    let dialect = TargetDialect::default_dialect();
    Engine::new(agents, &session, &dialect, cfg).run(&s).expect("engine run")
}

pub fn replay_runtime(name: &str) -> Runtime {
    Runtime::new(replay_gateway(name), None)
}

// ---------------------------------------------------------------------------
// Scripted problems

pub fn cutting_stock_problem() -> ProblemInstance {
    let text = std::fs::read_to_string(fixtures_dir().join("cutting_stock.problem.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub const CS_FAULTY: &str = "for j in range(NumPatterns):\n    model.addConstr(sum(NumRollsWidth[i][j] * Widths[i] for i in range(NumWidths)) <= RollWidth * NumRollsCut[j])";
// Each pattern's total width stays within RollWidth, scaled by the number
// of rolls cut so gurobipy receives a linear row rather than a numpy bool.
pub const CS_FIXED: &str = "for j in range(NumPatterns):\n    model.addConstr(NumRollsCut[j] * sum(NumRollsWidth[j][i] * Widths[i] for i in range(NumWidths)) <= RollWidth * NumRollsCut[j])";
pub const CS_DEMAND: &str = "for i in range(NumWidths):\n    model.addConstr(quicksum(NumRollsWidth[j][i] * NumRollsCut[j] for j in range(NumPatterns)) >= Orders[i])";
pub const CS_NONNEG: &str = "for j in range(NumPatterns):\n    model.addConstr(NumRollsCut[j] >= 0)";
pub const CS_OBJECTIVE: &str = "model.setObjective(quicksum(NumRollsCut[j] for j in range(NumPatterns)), GRB.MINIMIZE)";

pub fn cutting_stock() -> ProblemScript {
    let structured: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures_dir().join("cutting_stock.structured.json")).unwrap())
            .unwrap();
    let desc = |i: usize| structured["constraints"][i]["description"].as_str().unwrap().to_string();
    let anchors = vec![
        AnchorScript {
            description: desc(0),
            versions: vec![version(
                CS_DEMAND,
                "For every width i, the rolls of that width obtained from all patterns, counted by how often each pattern is cut, must reach at least the Orders for width i",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: desc(1),
            versions: vec![
                version(
                    CS_FAULTY,
                    "For each pattern j, the sum of rolls produced must be arranged so that their total width does not exceed the width of the raw roll times the number of rolls cut using that pattern.",
                    false,
                    Sim::Half,
                ),
                version(
                    CS_FIXED,
                    "Each pattern j must operate within the confines of RollWidth, dictating that the summarized width obtained from the rolls in that pattern remains within the roll's total width constraint.",
                    true,
                    Sim::Same,
                ),
            ],
        },
        AnchorScript {
            description: desc(2),
            versions: vec![version(
                CS_NONNEG,
                "The count of raw rolls cut with any pattern j (NumRollsCut) can not drop below zero",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: structured["objective"]["description"].as_str().unwrap().to_string(),
            versions: vec![version(
                CS_OBJECTIVE,
                "The aim is to make the overall count of raw rolls cut as small as possible",
                true,
                Sim::Same,
            )],
        },
    ];
    let optimal = ExecutionResult::optimal(6.0, BTreeMap::from([("NumRollsCut".to_string(), json!([4.0, 2.0]))]));
    ProblemScript {
        problem: cutting_stock_problem(),
        structured,
        anchors,
        executions: vec![(CS_OBJECTIVE.to_string(), optimal)],
    }
}

pub const PP_OBJ_MIN: &str = "model.setObjective(quicksum(Profit[p] * Produce[p] for p in range(NumProducts)), GRB.MINIMIZE)";
pub const PP_OBJ_UNITS: &str = "model.setObjective(quicksum(Produce[p] for p in range(NumProducts)), GRB.MAXIMIZE)";
pub const PP_OBJ_SUM: &str = "model.setObjective(quicksum(Profit[p] + Produce[p] for p in range(NumProducts)), GRB.MAXIMIZE)";
pub const PP_OBJ_PROFIT: &str = "model.setObjective(quicksum(Profit[p] * Produce[p] for p in range(NumProducts)), GRB.MAXIMIZE)";

/// Two products, machine and labor capacity, a market cap on the first.
/// Optimum 11 at Produce = [3, 1].
pub fn production_plan() -> ProblemScript {
    let mut problem = ProblemInstance::new(
        "production_plan",
        "A workshop makes NumProducts products. Each unit of product p earns Profit[p] and uses MachineUse[p] machine hours and LaborUse[p] labor hours. At most MachineCap machine hours and LaborCap labor hours are available, and at most MaxA units of the first product can be sold. How much of each product should be made to maximize profit?",
    );
    for (k, v) in [
        ("NumProducts", json!(2)),
        ("Profit", json!([3, 2])),
        ("MachineUse", json!([1, 1])),
        ("MachineCap", json!(4)),
        ("LaborUse", json!([1, 3])),
        ("LaborCap", json!(6)),
        ("MaxA", json!(3)),
    ] {
        problem.data.insert(k.to_string(), v);
    }
    problem.ground_truth_objective = Some(11.0);
    problem.ground_truth_solution = Some(BTreeMap::from([("Produce".to_string(), json!([3, 1]))]));

    let param = |symbol: &str, definition: &str, shape: &[&str]| {
        json!({"definition": definition, "symbol": symbol, "value": "", "shape": shape, "code": ""})
    };
    let c = [
        "The total machine hours used by all products must not exceed MachineCap",
        "The total labor hours used by all products must not exceed LaborCap",
        "At most MaxA units of the first product can be made",
        "The amount made of each product must be non-negative",
    ];
    let objective = "Maximize the total profit earned from all products";
    let structured = json!({
        "parameters": [
            param("NumProducts", "The number of products", &[]),
            param("Profit", "The profit per unit of each product", &["NumProducts"]),
            param("MachineUse", "Machine hours needed per unit of each product", &["NumProducts"]),
            param("MachineCap", "Available machine hours", &[]),
            param("LaborUse", "Labor hours needed per unit of each product", &["NumProducts"]),
            param("LaborCap", "Available labor hours", &[]),
            param("MaxA", "Sales limit of the first product", &[]),
        ],
        "variables": {
            "Produce": {"shape": ["NumProducts"], "type": "continuous", "definition": "The amount made of each product"}
        },
        "constraints": c.iter().map(|d| json!({"description": d, "code": null, "error": ""})).collect::<Vec<_>>(),
        "objective": {"description": objective, "code": null, "error": ""}
    });
    let anchors = vec![
        AnchorScript {
            description: c[0].into(),
            versions: vec![version(
                "model.addConstr(quicksum(MachineUse[p] * Produce[p] for p in range(NumProducts)) <= MachineCap)",
                "Machine hours summed over the products made may not go beyond MachineCap",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: c[1].into(),
            versions: vec![version(
                "model.addConstraint(quicksum(LaborUse[p] * Produce[p] for p in range(NumProducts)) <= LaborCap)",
                "Labor hours summed over the products made may not go beyond LaborCap",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: c[2].into(),
            versions: vec![version(
                "model.addConstr(Produce[0] <= MaxA)",
                "No more than MaxA units of product one are produced",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: c[3].into(),
            versions: vec![version(
                "for p in range(NumProducts):\n    model.addConstr(Produce[p] >= 0)",
                "Every product is made in a quantity of zero or more",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: objective.into(),
            versions: vec![
                version(PP_OBJ_MIN, "Minimize the total profit earned from all products", false, Sim::Half),
                version(PP_OBJ_UNITS, "Maximize the total number of units made across all products", false, Sim::Close),
                version(PP_OBJ_SUM, "Maximize the sum of unit profits and amounts made over all products", false, Sim::Half),
                version(PP_OBJ_PROFIT, "Make the profit collected over every product as large as possible", true, Sim::Same),
            ],
        },
    ];
    let result = |obj: f64, x: [f64; 2]| ExecutionResult::optimal(obj, BTreeMap::from([("Produce".to_string(), json!(x))]));
    ProblemScript {
        problem,
        structured,
        anchors,
        executions: vec![
            (PP_OBJ_MIN.into(), result(0.0, [0.0, 0.0])),
            (PP_OBJ_UNITS.into(), result(4.0, [3.0, 1.0])),
            (PP_OBJ_SUM.into(), result(9.0, [3.0, 1.0])),
            (PP_OBJ_PROFIT.into(), result(11.0, [3.0, 1.0])),
        ],
    }
}

fn bound_problem(id: &str, n: usize, description: &str) -> (ProblemInstance, Value) {
    let mut problem = ProblemInstance::new(id, description);
    problem.data.insert("N".into(), json!(n));
    problem.data.insert("Cap".into(), json!((1..=n).collect::<Vec<_>>()));
    let structured = json!({
        "parameters": [
            {"definition": "The number of items", "symbol": "N", "value": "", "shape": [], "code": ""},
            {"definition": "The capacity of each item", "symbol": "Cap", "value": "", "shape": ["N"], "code": ""}
        ],
        "variables": {"x": {"shape": ["N"], "type": "continuous", "definition": "The level of each item"}},
        "constraints": [],
        "objective": {"description": "", "code": null, "error": ""}
    });
    (problem, structured)
}

/// One anchor per entry of `thresholds`, the last being the objective.
/// Anchor k verifies from its `thresholds[k]`-th translation on.
pub fn scheduled(id: &str, thresholds: &[usize]) -> ProblemScript {
    let n = thresholds.len() - 1;
    let (problem, mut structured) = bound_problem(
        id,
        n,
        &format!("Choose the levels of N = {n} items, each bounded by its capacity Cap, to maximize the total level."),
    );
    let last = thresholds.iter().copied().max().unwrap_or(1).max(5);
    let mut anchors = Vec::new();
    let mut constraints = Vec::new();
    for (k, &threshold) in thresholds.iter().enumerate() {
        let description = if k < n {
            format!("The level of item {k} must not exceed its capacity Cap[{k}]")
        } else {
            "Maximize the total level of all items".to_string()
        };
        let versions = (1..=last)
            .map(|v| {
                let code = if k < n {
                    format!("model.addConstr(x[{k}] <= Cap[{k}])  # version {v}")
                } else {
                    format!("model.setObjective(quicksum(x[i] for i in range(N)), GRB.MAXIMIZE)  # version {v}")
                };
                let aligned = v >= threshold;
                let recon = if aligned {
                    format!("Anchor {k} as written in version {v}, matching its description")
                } else {
                    format!("Anchor {k} as written in version {v}, which drifts from its description")
                };
                version(&code, &recon, aligned, if aligned { Sim::Same } else { Sim::Half })
            })
            .collect();
        if k < n {
            constraints.push(json!({"description": description, "code": null, "error": ""}));
        }
        anchors.push(AnchorScript { description, versions });
    }
    structured["constraints"] = json!(constraints);
    structured["objective"]["description"] = json!(anchors[n].description);
    ProblemScript {
        problem,
        structured,
        anchors,
        executions: vec![],
    }
}

/// Eight anchors, two of which align per iteration.
pub fn eight_anchors() -> ProblemScript {
    scheduled("eight_anchors", &[2, 2, 3, 3, 4, 4, 5, 5])
}

/// Error-set sizes the engine must report for a [`scheduled`] problem with
/// frozen aligned anchors: at iteration t every anchor whose threshold
/// exceeds t is still misaligned.
pub fn expected_sizes(thresholds: &[usize], t_max: u32) -> Vec<usize> {
    let mut sizes = Vec::new();
    for t in 1..=t_max as usize {
        let n = thresholds.iter().filter(|&&h| h > t).count();
        sizes.push(n);
        if n == 0 {
            break;
        }
    }
    sizes
}

/// One constraint that verifies at once and an objective that never does.
pub fn never_aligns() -> ProblemScript {
    let (problem, mut structured) = bound_problem(
        "never_aligns",
        2,
        "Choose the levels of N = 2 items, each bounded by its capacity Cap, to maximize the total level.",
    );
    let constraint = "The level of every item must not exceed its capacity";
    let objective = "Maximize the total level of both items";
    structured["constraints"] = json!([{"description": constraint, "code": null, "error": ""}]);
    structured["objective"]["description"] = json!(objective);
    let anchors = vec![
        AnchorScript {
            description: constraint.into(),
            versions: vec![version(
                "for i in range(N):\n    model.addConstr(x[i] <= Cap[i])",
                "No item's level is allowed above its capacity",
                true,
                Sim::Same,
            )],
        },
        AnchorScript {
            description: objective.into(),
            versions: (1..=6)
                .map(|v| {
                    version(
                        &format!("model.setObjective(x[0] * {v}, GRB.MINIMIZE)"),
                        &format!("Minimize {v} times the level of the first item"),
                        false,
                        Sim::Half,
                    )
                })
                .collect(),
        },
    ];
    ProblemScript {
        problem,
        structured,
        anchors,
        executions: vec![],
    }
}

// ---------------------------------------------------------------------------
// Recording

pub const METHODS: [VerifyMethod; 2] = [VerifyMethod::Llm, VerifyMethod::Similarity];

/// Records full pipeline runs of every problem under every method.
pub fn record_pipeline(path: &Path, world: &Arc<World>) {
    for method in METHODS {
        let cassette = Cassette::open_or_create(path).unwrap();
        let gateway = Gateway::record(Box::new(WorldTransport::new(Arc::clone(world))), cassette);
        let runtime = Runtime::new(gateway, Some(Box::new(StubSandbox(Arc::clone(world)))));
        for script in &world.problems {
            runtime
                .solve_with(script.problem(), engine_config(method))
                .unwrap_or_else(|e| panic!("{}: {e}", script.problem.id));
        }
    }
}

/// Records extract plus the correction loop only.
pub fn record_engine(path: &Path, world: &Arc<World>) {
    for method in METHODS {
        let cassette = Cassette::open_or_create(path).unwrap();
        let gateway = Gateway::record(Box::new(WorldTransport::new(Arc::clone(world))), cassette);
        for script in &world.problems {
            run_engine(&gateway, script.problem(), engine_config(method));
        }
    }
}

pub fn bench_corpus_path() -> PathBuf {
    fixtures_dir().join("bench").join("corpus.jsonl")
}

/// Writes every fixture into `dir`, laid out like `tests/fixtures`.
pub fn write_fixtures(dir: &Path) {
    let cassettes = dir.join("cassettes");
    std::fs::create_dir_all(&cassettes).unwrap();
    std::fs::create_dir_all(dir.join("bench")).unwrap();
    std::fs::create_dir_all(dir.join("problems")).unwrap();
    for entry in std::fs::read_dir(&cassettes).unwrap() {
        std::fs::remove_file(entry.unwrap().path()).unwrap();
    }

    record_pipeline(&cassettes.join("cutting_stock.jsonl"), &World::new(vec![cutting_stock()]));
    record_pipeline(&cassettes.join("corpus.jsonl"), &World::new(vec![cutting_stock(), production_plan()]));
    record_engine(&cassettes.join("eight_anchors.jsonl"), &World::new(vec![eight_anchors()]));
    record_engine(&cassettes.join("never_aligns.jsonl"), &World::new(vec![never_aligns()]));

    let corpus: Vec<String> = [cutting_stock(), production_plan()]
        .iter()
        .map(|s| serde_json::to_string(&s.problem).unwrap())
        .collect();
    std::fs::write(dir.join("bench").join("corpus.jsonl"), corpus.join("\n") + "\n").unwrap();
    for script in [production_plan(), eight_anchors(), never_aligns()] {
        let text = serde_json::to_string_pretty(&script.problem).unwrap() + "\n";
        std::fs::write(dir.join("problems").join(format!("{}.json", script.problem.id)), text).unwrap();
    }
}
