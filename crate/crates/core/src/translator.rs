//! Extraction of structured data from prose, deterministic rendering of
//! parameters and variables, and agent translation of single anchors.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use crate::agent::{AgentError, Agents};
use crate::dialect::TargetDialect;
use crate::gateway::Stage;
use crate::prompts::{parse_fenced_nonempty, HEADER_CODE, HEADER_STRUCTURED_DATA};
use crate::schema::{
    parse_structured_data, scan_identifiers, Anchor, Parameter, ProblemInstance, SchemaError,
    StructuredData, VariableDecl,
};

/// Asks the extract agent for the structured data of `problem`. Returned
/// anchors carry no code and an unset flag.
pub fn extract(agents: &Agents<'_>, problem: Arc<ProblemInstance>) -> Result<StructuredData, AgentError> {
    if problem.description.trim().is_empty() {
        return Err(AgentError::Usage("problem description is empty".into()));
    }
    let data_keys = if problem.data.is_empty() {
        "None".to_string()
    } else {
        problem.data.keys().cloned().collect::<Vec<_>>().join(", ")
    };
    let bindings = BTreeMap::from([
        ("description", problem.description.clone()),
        ("data_keys", data_keys),
    ]);
    agents.ask(Stage::Extract, &bindings, |response| {
        let payload = parse_fenced_nonempty(response, HEADER_STRUCTURED_DATA)?;
        let s = parse_structured_data(strip_code_block(&payload), Arc::clone(&problem))?;
        check_against_data(&s, &problem)?;
        Ok(fresh_anchors(s)?)
    })
}

/// Removes a Markdown code block wrapper if the agent added one.
fn strip_code_block(payload: &str) -> &str {
    let t = payload.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map_or("", |(_, body)| body);
        return rest.trim_end().strip_suffix("```").unwrap_or(rest).trim();
    }
    t
}

fn check_against_data(s: &StructuredData, problem: &ProblemInstance) -> Result<(), SchemaError> {
    if problem.data.is_empty() {
        return Ok(());
    }
    match s.parameters.iter().find(|p| !problem.data.contains_key(&p.symbol)) {
        Some(p) => Err(SchemaError::InvalidProblem(format!(
            "parameter `{}` is not in the data file",
            p.symbol
        ))),
        None => Ok(()),
    }
}

fn fresh_anchors(s: StructuredData) -> Result<StructuredData, SchemaError> {
    let anchors = s
        .semantic_anchors()
        .iter()
        .map(|a| Anchor::new(a.id, a.kind, a.description.clone()))
        .collect();
    s.with_anchors(anchors)
}

/// One `(symbol, code)` per parameter, then per variable, in declaration order.
pub fn render_simple(s: &StructuredData, dialect: &TargetDialect) -> Vec<(String, String)> {
    s.parameters
        .iter()
        .map(|p| (p.symbol.clone(), dialect.render_parameter(p)))
        .chain(
            s.variables
                .iter()
                .map(|v| (v.symbol.clone(), dialect.render_variable(v))),
        )
        .collect()
}

/// Generates the code fragment for one anchor from its description.
pub fn translate_anchor(
    agents: &Agents<'_>,
    anchor: &Anchor,
    context: &StructuredData,
    dialect: &TargetDialect,
) -> Result<String, AgentError> {
    if anchor.description.trim().is_empty() {
        return Err(AgentError::Usage(format!("anchor {} has an empty description", anchor.id)));
    }
    let bindings = BTreeMap::from([
        ("description", context.problem.description.clone()),
        ("solver", dialect.name.clone()),
        ("constraint", anchor.description.clone()),
        ("params", parameter_listing(context.parameters.iter())),
        ("vars", variable_listing(context.variables.iter())),
        ("conventions", dialect.conventions.clone()),
    ]);
    agents.ask(Stage::Translate, &bindings, |response| {
        let code = parse_fenced_nonempty(response, HEADER_CODE)?;
        let code = strip_code_block(&code).to_string();
        let undeclared = undeclared_identifiers(&code, context, dialect);
        if undeclared.is_empty() {
            Ok(code)
        } else {
            Err(AgentError::Undeclared(undeclared.into_iter().collect()))
        }
    })
}

pub fn parameter_listing<'a>(params: impl Iterator<Item = &'a Parameter>) -> String {
    let lines: Vec<String> = params
        .map(|p| {
            let shape = if p.is_scalar() {
                "scalar".to_string()
            } else {
                format!("shape: [{}]", p.shape.join(", "))
            };
            format!("- {}: {} ({shape})", p.symbol, p.definition)
        })
        .collect();
    if lines.is_empty() {
        "None".into()
    } else {
        lines.join("\n")
    }
}

pub fn variable_listing<'a>(vars: impl Iterator<Item = &'a VariableDecl>) -> String {
    let lines: Vec<String> = vars
        .map(|v| {
            let shape = if v.shape.is_empty() {
                "scalar".to_string()
            } else {
                format!("shape: [{}]", v.shape.join(", "))
            };
            format!("- {}: {} ({}, {shape})", v.symbol, v.definition, v.var_type.as_str())
        })
        .collect();
    if lines.is_empty() {
        "None".into()
    } else {
        lines.join("\n")
    }
}

const PYTHON_NAMES: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is",
    "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
    "abs", "all", "any", "bool", "dict", "enumerate", "float", "int", "len", "list", "max", "min",
    "print", "range", "reversed", "round", "set", "sorted", "str", "sum", "tuple", "zip",
];

/// Identifiers a fragment uses that are neither declared in `context`, bound
/// inside the fragment (loop targets, assignments, keyword arguments) nor
/// known to the dialect.
pub fn undeclared_identifiers(
    code: &str,
    context: &StructuredData,
    dialect: &TargetDialect,
) -> BTreeSet<String> {
    let tokens = scan_identifiers(code);
    let mut bound: HashSet<&str> = HashSet::new();
    let mut in_target = false;
    for (i, tok) in tokens.iter().enumerate() {
        match tok.text.as_str() {
            "for" | "lambda" => in_target = true,
            "in" => in_target = false,
            _ if in_target && !tok.after_dot => {
                bound.insert(&tok.text);
                if tok.next == Some(':') {
                    in_target = false;
                }
            }
            _ => {}
        }
        if tok.next == Some('=') && tok.next2 != Some('=') {
            bound.insert(&tok.text);
        }
        if i > 0 && tokens[i - 1].text == "as" {
            bound.insert(&tok.text);
        }
    }
    let declared: HashSet<&str> = context
        .parameters
        .iter()
        .map(|p| p.symbol.as_str())
        .chain(context.variables.iter().map(|v| v.symbol.as_str()))
        .collect();
    tokens
        .iter()
        .filter(|t| !t.after_dot)
        .map(|t| t.text.as_str())
        .filter(|name| {
            !bound.contains(name)
                && !declared.contains(name)
                && !PYTHON_NAMES.contains(name)
                && !dialect.identifiers.iter().any(|d| d == name)
        })
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{CompletionRequest, GatewayError, LanguageModel, SamplingConfig};
    use crate::prompts::{emit_fenced, PromptSet};
    use std::sync::Mutex;

    const CUTTING_STOCK: &str = include_str!("../tests/fixtures/cutting_stock.structured.json");

    fn cutting_stock() -> StructuredData {
        parse_structured_data(
            CUTTING_STOCK,
            Arc::new(ProblemInstance::new("cs", "This is a cutting stock problem.")),
        )
        .unwrap()
    }

    struct Canned {
        answers: Mutex<Vec<String>>,
        prompts: Mutex<Vec<String>>,
    }

    impl Canned {
        fn new(answers: &[&str]) -> Self {
            Self {
                answers: Mutex::new(answers.iter().map(|s| s.to_string()).collect()),
                prompts: Mutex::new(vec![]),
            }
        }
    }

    impl LanguageModel for Canned {
        fn complete(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
            self.prompts.lock().unwrap().push(req.prompt.clone());
            let mut a = self.answers.lock().unwrap();
            if a.is_empty() {
                Err(GatewayError::NoTransport)
            } else {
                Ok(a.remove(0))
            }
        }
    }

    #[test]
    fn render_simple_matches_recorded_code_fields() {
        let s = cutting_stock();
        let dialect = TargetDialect::default_dialect();
        let rendered = render_simple(&s, &dialect);
        assert_eq!(rendered.len(), 7);
        for (p, (symbol, code)) in s.parameters.iter().zip(&rendered) {
            assert_eq!(&p.symbol, symbol);
            assert_eq!(&p.code, code);
        }
        assert_eq!(rendered[0].1, "RollWidth = data[\"RollWidth\"] # scalar parameter");
        assert_eq!(rendered[1].1, "Widths = np.array(data[\"Widths\"]) # ['NumWidths']");
        assert_eq!(rendered[6].0, "NumRollsCut");
    }

    #[test]
    fn render_simple_empty() {
        let raw = r#"{"parameters":[],"variables":{},"constraints":[],"objective":{"description":"o","code":null,"error":""}}"#;
        let s = parse_structured_data(raw, Arc::new(ProblemInstance::new("p", "d"))).unwrap();
        assert!(render_simple(&s, &TargetDialect::default_dialect()).is_empty());
    }

    #[test]
    fn lint_accepts_case_study_fragments() {
        let s = cutting_stock();
        let d = TargetDialect::default_dialect();
        let faulty = "for j in range(NumPatterns):\n    model.addConstr(sum(NumRollsWidth[i][j] * Widths[i] for i in range(NumWidths)) <= RollWidth * NumRollsCut[j])";
        assert!(undeclared_identifiers(faulty, &s, &d).is_empty());
        let objective = "model.setObjective(quicksum(NumRollsCut[j] for j in range(NumPatterns)), GRB.MINIMIZE)";
        assert!(undeclared_identifiers(objective, &s, &d).is_empty());
        let assigned = "total = quicksum(NumRollsCut[p] for p in range(NumPatterns))\nmodel.addConstr(total >= 1, name=\"c\")";
        assert!(undeclared_identifiers(assigned, &s, &d).is_empty());
        let tuple = "for (a, b) in zip(range(NumPatterns), range(NumWidths)):\n    model.addConstr(NumRollsCut[a] >= b)";
        assert!(undeclared_identifiers(tuple, &s, &d).is_empty());
    }

    #[test]
    fn lint_flags_unknown_names() {
        let s = cutting_stock();
        let d = TargetDialect::default_dialect();
        let bad = "model.addConstr(quicksum(Cuts[j] for j in range(NumPatterns)) >= Demand)";
        let found: Vec<_> = undeclared_identifiers(bad, &s, &d).into_iter().collect();
        assert_eq!(found, ["Cuts", "Demand"]);
    }

    #[test]
    fn translate_includes_listings_and_reprompts_on_undeclared_names() {
        let s = cutting_stock();
        let d = TargetDialect::default_dialect();
        let prompts = PromptSet::builtin();
        let good = "model.setObjective(quicksum(NumRollsCut[j] for j in range(NumPatterns)), GRB.MINIMIZE)";
        let llm = Canned::new(&[
            &emit_fenced(HEADER_CODE, "model.setObjective(Total, GRB.MINIMIZE)"),
            &emit_fenced(HEADER_CODE, good),
        ]);
        let agents = Agents::new(&llm, &prompts, SamplingConfig::default());
        let code = translate_anchor(&agents, s.objective(), &s, &d).unwrap();
        assert_eq!(code, good);
        let sent = llm.prompts.lock().unwrap();
        assert_eq!(sent.len(), 2);
        assert!(sent[0].contains("- RollWidth: The width of the raw roll to be cut (scalar)"));
        assert!(sent[0].contains(
            "- NumRollsCut: The number of raw rolls cut using each pattern (integer, shape: [NumPatterns])"
        ));
        assert!(sent[0].contains("minimize the total number of raw rolls cut"));
        assert!(!sent[0].to_lowercase().contains("latex:"));
    }

    #[test]
    fn translate_rejects_empty_description() {
        let s = cutting_stock();
        let prompts = PromptSet::builtin();
        let llm = Canned::new(&[]);
        let agents = Agents::new(&llm, &prompts, SamplingConfig::default());
        let mut anchor = s.objective().clone();
        anchor.description = "  ".into();
        assert!(matches!(
            translate_anchor(&agents, &anchor, &s, &TargetDialect::default_dialect()),
            Err(AgentError::Usage(_))
        ));
        assert!(llm.prompts.lock().unwrap().is_empty());
    }

    #[test]
    fn extract_parses_and_resets_anchor_state() {
        let prompts = PromptSet::builtin();
        let raw = r#"{"parameters":[{"definition":"cap","symbol":"Cap","value":"","shape":[],"code":""}],
            "variables":{"x":{"shape":[],"type":"continuous","definition":"amount"}},
            "constraints":[{"description":"x at most Cap","code":"model.addConstr(x <= Cap)","error":"NO"}],
            "objective":{"description":"maximize x","code":null,"error":""}}"#;
        let llm = Canned::new(&[&format!("Sure.\n{}", emit_fenced(HEADER_STRUCTURED_DATA, &format!("```json\n{raw}\n```")))]);
        let agents = Agents::new(&llm, &prompts, SamplingConfig::default());
        let mut problem = ProblemInstance::new("p", "Maximize x subject to x <= Cap.");
        problem.data.insert("Cap".into(), serde_json::json!(4));
        let s = extract(&agents, Arc::new(problem)).unwrap();
        assert_eq!(s.semantic_anchors().len(), 2);
        assert!(s.semantic_anchors().iter().all(|a| a.code.is_none()
            && a.error_flag() == crate::schema::ErrorFlag::Unset));
        assert!(llm.prompts.lock().unwrap()[0].contains("-----\nCap\n-----"));
    }

    #[test]
    fn extract_malformed_json_reprompts_then_fails() {
        let prompts = PromptSet::builtin();
        let bad = emit_fenced(HEADER_STRUCTURED_DATA, "{\"parameters\": [,}");
        let llm = Canned::new(&[&bad, &bad]);
        let agents = Agents::new(&llm, &prompts, SamplingConfig::default());
        let err = extract(&agents, Arc::new(ProblemInstance::new("p", "d"))).unwrap_err();
        assert!(matches!(err, AgentError::Schema(SchemaError::Json(_))), "{err:?}");
        assert_eq!(llm.prompts.lock().unwrap().len(), 2);
    }

    #[test]
    fn extract_requires_description() {
        let prompts = PromptSet::builtin();
        let llm = Canned::new(&[]);
        let agents = Agents::new(&llm, &prompts, SamplingConfig::default());
        assert!(matches!(
            extract(&agents, Arc::new(ProblemInstance::new("p", ""))),
            Err(AgentError::Usage(_))
        ));
    }
}
