//! Structured problem data: parameters, decision variables and the semantic
//! anchors (constraints and objective) extracted from a problem description.
//!
//! The JSON layout read and written here is the extraction format:
//!
//! ```json
//! {
//!   "parameters": [{"definition": "...", "symbol": "RollWidth", "value": "", "shape": [], "code": "..."}],
//!   "variables": {"NumRollsCut": {"shape": ["NumPatterns"], "type": "integer", "definition": "..."}},
//!   "constraints": [{"description": "...", "code": null, "error": ""}],
//!   "objective": {"description": "...", "code": null, "error": ""}
//! }
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong type (expected {expected})")]
    WrongType { field: String, expected: &'static str },
    #[error("`{0}` is not a legal symbol")]
    InvalidSymbol(String),
    #[error("duplicate symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("shape of `{owner}` references `{dim}`, which is not a scalar parameter")]
    DanglingShape { owner: String, dim: String },
    #[error("unknown variable type `{0}`")]
    UnknownVarType(String),
    #[error("unknown error flag `{0}`")]
    UnknownErrorFlag(String),
    #[error("anchor {0} carries a verification flag but has no code")]
    FlagWithoutCode(usize),
    #[error("invalid problem instance: {0}")]
    InvalidProblem(String),
}

/// Letters, digits and underscore, starting with a letter.
pub fn is_symbol(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn check_symbol(s: &str) -> Result<(), SchemaError> {
    if is_symbol(s) {
        Ok(())
    } else {
        Err(SchemaError::InvalidSymbol(s.to_string()))
    }
}

/// One benchmark problem: the prose description plus the numeric data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub data: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_solution: Option<BTreeMap<String, Value>>,
}

impl ProblemInstance {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            data: Map::new(),
            ground_truth_objective: None,
            ground_truth_solution: None,
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.id.trim().is_empty() {
            return Err(SchemaError::InvalidProblem("empty id".into()));
        }
        if self.description.trim().is_empty() {
            return Err(SchemaError::InvalidProblem(format!(
                "problem `{}` has an empty description",
                self.id
            )));
        }
        for (key, value) in &self.data {
            check_symbol(key)?;
            if !is_numeric_tree(value) {
                return Err(SchemaError::InvalidProblem(format!(
                    "data entry `{key}` is not a number or nested numeric array"
                )));
            }
        }
        Ok(())
    }
}

fn is_numeric_tree(value: &Value) -> bool {
    match value {
        Value::Number(_) => true,
        Value::Array(items) => items.iter().all(is_numeric_tree),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub definition: String,
    pub symbol: String,
    pub value: String,
    pub shape: Vec<String>,
    pub code: String,
}

impl Parameter {
    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Continuous,
    Integer,
    Binary,
}

impl VarType {
    pub fn as_str(self) -> &'static str {
        match self {
            VarType::Continuous => "continuous",
            VarType::Integer => "integer",
            VarType::Binary => "binary",
        }
    }

    fn parse(s: &str) -> Result<Self, SchemaError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" | "real" | "float" => Ok(VarType::Continuous),
            "integer" | "int" => Ok(VarType::Integer),
            "binary" | "bool" | "boolean" => Ok(VarType::Binary),
            other => Err(SchemaError::UnknownVarType(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub symbol: String,
    pub shape: Vec<String>,
    pub var_type: VarType,
    pub definition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub usize);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Constraint,
    Objective,
}

/// The verification flag carried in the `error` field of a constraint or
/// objective: `""` before the first check, `"YES"` while misaligned and
/// `"NO"` once aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ErrorFlag {
    #[default]
    Unset,
    Yes,
    No,
}

impl ErrorFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorFlag::Unset => "",
            ErrorFlag::Yes => "YES",
            ErrorFlag::No => "NO",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SchemaError> {
        match s {
            "" => Ok(ErrorFlag::Unset),
            "YES" => Ok(ErrorFlag::Yes),
            "NO" => Ok(ErrorFlag::No),
            other => Err(SchemaError::UnknownErrorFlag(other.to_string())),
        }
    }

    pub fn status(self) -> AnchorStatus {
        match self {
            ErrorFlag::Unset => AnchorStatus::Unchecked,
            ErrorFlag::Yes => AnchorStatus::Misaligned,
            ErrorFlag::No => AnchorStatus::Aligned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorStatus {
    Unchecked,
    Aligned,
    Misaligned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u32,
    pub event: String,
    pub payload: String,
}

/// A constraint or the objective: the original text it must keep meaning,
/// the code currently implementing it and the latest description recovered
/// from that code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anchor {
    pub id: AnchorId,
    pub kind: AnchorKind,
    pub description: String,
    pub code: Option<String>,
    pub reconstructed: Option<String>,
    flag: ErrorFlag,
    history: Vec<HistoryEntry>,
}

impl Anchor {
    pub fn new(id: AnchorId, kind: AnchorKind, description: impl Into<String>) -> Self {
        Self {
            id,
            kind,
            description: description.into(),
            code: None,
            reconstructed: None,
            flag: ErrorFlag::Unset,
            history: Vec::new(),
        }
    }

    pub fn error_flag(&self) -> ErrorFlag {
        self.flag
    }

    pub fn status(&self) -> AnchorStatus {
        self.flag.status()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn push_history(&mut self, iteration: u32, event: &str, payload: impl Into<String>) {
        self.history.push(HistoryEntry {
            iteration,
            event: event.to_string(),
            payload: payload.into(),
        });
    }

    /// Replaces the code fragment. The flag keeps the last verdict: a fresh
    /// fragment stays `YES` until the next verification says otherwise.
    pub fn set_code(&mut self, code: String) {
        self.code = Some(code);
    }

    /// Records a verification outcome. Returns `false` when the move is
    /// `NO -> YES`, a reopening of an aligned anchor that only happens when
    /// aligned anchors are re-verified.
    pub fn record_verdict(&mut self, aligned: bool) -> bool {
        let next = if aligned { ErrorFlag::No } else { ErrorFlag::Yes };
        let regular = !(self.flag == ErrorFlag::No && next == ErrorFlag::Yes);
        self.flag = next;
        regular
    }
}

/// Parameters and variables (rendered by template) plus anchors (translated
/// by the agent), tied to the problem they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredData {
    pub parameters: Vec<Parameter>,
    pub variables: Vec<VariableDecl>,
    anchors: Vec<Anchor>,
    pub problem: Arc<ProblemInstance>,
}

impl StructuredData {
    /// Builds and validates. `constraints` keep their order; the objective
    /// becomes the last anchor.
    pub fn new(
        parameters: Vec<Parameter>,
        variables: Vec<VariableDecl>,
        constraints: Vec<Anchor>,
        objective: Anchor,
        problem: Arc<ProblemInstance>,
    ) -> Result<Self, SchemaError> {
        let mut anchors = constraints;
        anchors.push(objective);
        for (i, anchor) in anchors.iter_mut().enumerate() {
            anchor.id = AnchorId(i);
        }
        let last = anchors.len() - 1;
        for (i, anchor) in anchors.iter_mut().enumerate() {
            anchor.kind = if i == last {
                AnchorKind::Objective
            } else {
                AnchorKind::Constraint
            };
        }
        let s = Self {
            parameters,
            variables,
            anchors,
            problem,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for symbol in self
            .parameters
            .iter()
            .map(|p| &p.symbol)
            .chain(self.variables.iter().map(|v| &v.symbol))
        {
            check_symbol(symbol)?;
            if !seen.insert(symbol.as_str()) {
                return Err(SchemaError::DuplicateSymbol(symbol.clone()));
            }
        }
        let scalars: HashSet<&str> = self
            .parameters
            .iter()
            .filter(|p| p.is_scalar())
            .map(|p| p.symbol.as_str())
            .collect();
        let shapes = self
            .parameters
            .iter()
            .map(|p| (&p.symbol, &p.shape))
            .chain(self.variables.iter().map(|v| (&v.symbol, &v.shape)));
        for (owner, shape) in shapes {
            for dim in shape {
                if !scalars.contains(dim.as_str()) {
                    return Err(SchemaError::DanglingShape {
                        owner: owner.clone(),
                        dim: dim.clone(),
                    });
                }
            }
        }
        for anchor in &self.anchors {
            if anchor.code.is_none() && anchor.flag != ErrorFlag::Unset {
                return Err(SchemaError::FlagWithoutCode(anchor.id.0));
            }
        }
        Ok(())
    }

    /// Constraints in declaration order followed by the objective.
    pub fn semantic_anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn anchor(&self, id: AnchorId) -> Option<&Anchor> {
        self.anchors.get(id.0)
    }

    pub fn constraints(&self) -> &[Anchor] {
        &self.anchors[..self.anchors.len() - 1]
    }

    pub fn objective(&self) -> &Anchor {
        self.anchors.last().expect("objective anchor always present")
    }

    pub fn parameter(&self, symbol: &str) -> Option<&Parameter> {
        self.parameters.iter().find(|p| p.symbol == symbol)
    }

    pub fn variable(&self, symbol: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.symbol == symbol)
    }

    /// Copy of this data with the anchors replaced, e.g. after a correction run.
    pub fn with_anchors(&self, anchors: Vec<Anchor>) -> Result<Self, SchemaError> {
        let mut anchors = anchors;
        let objective = anchors
            .pop()
            .ok_or_else(|| SchemaError::MissingField("objective".into()))?;
        Self::new(
            self.parameters.clone(),
            self.variables.clone(),
            anchors,
            objective,
            Arc::clone(&self.problem),
        )
    }

    /// Serializes to the extraction JSON layout. Reconstructed descriptions
    /// travel in `description_new`; history is not serialized.
    pub fn to_json(&self) -> Value {
        let parameters: Vec<Value> = self
            .parameters
            .iter()
            .map(|p| {
                serde_json::json!({
                    "definition": p.definition,
                    "symbol": p.symbol,
                    "value": p.value,
                    "shape": p.shape,
                    "code": p.code,
                })
            })
            .collect();
        let mut variables = Map::new();
        for v in &self.variables {
            variables.insert(
                v.symbol.clone(),
                serde_json::json!({
                    "shape": v.shape,
                    "type": v.var_type.as_str(),
                    "definition": v.definition,
                }),
            );
        }
        let constraints: Vec<Value> = self.constraints().iter().map(anchor_json).collect();
        serde_json::json!({
            "parameters": parameters,
            "constraints": constraints,
            "variables": variables,
            "objective": anchor_json(self.objective()),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("structured data serializes")
    }
}

fn anchor_json(a: &Anchor) -> Value {
    let mut obj = Map::new();
    obj.insert("description".into(), Value::String(a.description.clone()));
    obj.insert(
        "code".into(),
        a.code.clone().map(Value::String).unwrap_or(Value::Null),
    );
    obj.insert("error".into(), Value::String(a.flag.as_str().into()));
    if let Some(r) = &a.reconstructed {
        obj.insert("description_new".into(), Value::String(r.clone()));
    }
    Value::Object(obj)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, SchemaError> {
    obj.get(name)
        .ok_or_else(|| SchemaError::MissingField(name.to_string()))
}

fn str_field(obj: &Map<String, Value>, name: &str, ctx: &str) -> Result<String, SchemaError> {
    match field(obj, name)? {
        Value::String(s) => Ok(s.clone()),
        _ => Err(SchemaError::WrongType {
            field: format!("{ctx}.{name}"),
            expected: "string",
        }),
    }
}

fn opt_str_field(obj: &Map<String, Value>, name: &str, ctx: &str) -> Result<Option<String>, SchemaError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(SchemaError::WrongType {
            field: format!("{ctx}.{name}"),
            expected: "string or null",
        }),
    }
}

fn shape_field(obj: &Map<String, Value>, ctx: &str) -> Result<Vec<String>, SchemaError> {
    let wrong = || SchemaError::WrongType {
        field: format!("{ctx}.shape"),
        expected: "list of symbols",
    };
    match obj.get("shape") {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(wrong))
            .collect(),
        Some(_) => Err(wrong()),
    }
}

fn as_object<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>, SchemaError> {
    v.as_object().ok_or_else(|| SchemaError::WrongType {
        field: ctx.to_string(),
        expected: "object",
    })
}

fn parse_anchor(v: &Value, ctx: &str) -> Result<Anchor, SchemaError> {
    let obj = as_object(v, ctx)?;
    let description = str_field(obj, "description", ctx)?;
    let code = opt_str_field(obj, "code", ctx)?;
    let flag = match obj.get("error") {
        None | Some(Value::Null) => ErrorFlag::Unset,
        Some(Value::String(s)) => ErrorFlag::parse(s)?,
        Some(_) => {
            return Err(SchemaError::WrongType {
                field: format!("{ctx}.error"),
                expected: "string",
            })
        }
    };
    let mut anchor = Anchor::new(AnchorId(0), AnchorKind::Constraint, description);
    anchor.code = code;
    anchor.reconstructed = opt_str_field(obj, "description_new", ctx)?;
    anchor.flag = flag;
    Ok(anchor)
}

/// Parses the extraction JSON into validated [`StructuredData`]. Unknown
/// fields are ignored; variables keep the order in which they appear.
pub fn parse_structured_data(
    raw: &str,
    problem: Arc<ProblemInstance>,
) -> Result<StructuredData, SchemaError> {
    let root: Value = serde_json::from_str(raw).map_err(|e| SchemaError::Json(e.to_string()))?;
    from_json(&root, problem)
}

pub fn from_json(root: &Value, problem: Arc<ProblemInstance>) -> Result<StructuredData, SchemaError> {
    let root = as_object(root, "root")?;

    let parameters = match field(root, "parameters")? {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let ctx = format!("parameters[{i}]");
                let obj = as_object(item, &ctx)?;
                let value = match obj.get("value") {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(other) => other.to_string(),
                };
                Ok(Parameter {
                    definition: opt_str_field(obj, "definition", &ctx)?.unwrap_or_default(),
                    symbol: str_field(obj, "symbol", &ctx)?,
                    value,
                    shape: shape_field(obj, &ctx)?,
                    code: opt_str_field(obj, "code", &ctx)?.unwrap_or_default(),
                })
            })
            .collect::<Result<Vec<_>, SchemaError>>()?,
        _ => {
            return Err(SchemaError::WrongType {
                field: "parameters".into(),
                expected: "list",
            })
        }
    };

    let variables = as_object(field(root, "variables")?, "variables")?
        .iter()
        .map(|(symbol, decl)| {
            let ctx = format!("variables.{symbol}");
            let obj = as_object(decl, &ctx)?;
            let var_type = match obj.get("type") {
                None | Some(Value::Null) => VarType::Continuous,
                Some(Value::String(s)) => VarType::parse(s)?,
                Some(_) => {
                    return Err(SchemaError::WrongType {
                        field: format!("{ctx}.type"),
                        expected: "string",
                    })
                }
            };
            Ok(VariableDecl {
                symbol: symbol.clone(),
                shape: shape_field(obj, &ctx)?,
                var_type,
                definition: opt_str_field(obj, "definition", &ctx)?.unwrap_or_default(),
            })
        })
        .collect::<Result<Vec<_>, SchemaError>>()?;

    let constraints = match field(root, "constraints")? {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| parse_anchor(item, &format!("constraints[{i}]")))
            .collect::<Result<Vec<_>, SchemaError>>()?,
        _ => {
            return Err(SchemaError::WrongType {
                field: "constraints".into(),
                expected: "list",
            })
        }
    };
    let objective = parse_anchor(field(root, "objective")?, "objective")?;

    StructuredData::new(parameters, variables, constraints, objective, problem)
}

/// Identifier-like tokens of a code fragment, skipping string literals,
/// comments and attribute names (`model.addConstr` yields only `model`).
pub fn identifiers(code: &str) -> Vec<String> {
    scan_identifiers(code)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct IdentToken {
    pub text: String,
    pub after_dot: bool,
    /// Next non-space character after the token.
    pub next: Option<char>,
    pub next2: Option<char>,
}

pub(crate) fn scan_identifiers(code: &str) -> Vec<IdentToken> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut prev_sig: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let triple = i + 2 < chars.len() && chars[i + 1] == quote && chars[i + 2] == quote;
            i += if triple { 3 } else { 1 };
            while i < chars.len() {
                if chars[i] == '\\' {
                    i += 2;
                    continue;
                }
                if triple {
                    if i + 2 < chars.len()
                        && chars[i] == quote
                        && chars[i + 1] == quote
                        && chars[i + 2] == quote
                    {
                        i += 3;
                        break;
                    }
                } else if chars[i] == quote || chars[i] == '\n' {
                    i += 1;
                    break;
                }
                i += 1;
            }
            prev_sig = Some(quote);
            continue;
        }
        if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                i += 1;
            }
            prev_sig = Some('0');
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let mut j = i;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                j += 1;
            }
            // string prefixes like f"..." are not identifiers
            if j == i && j < chars.len() && (chars[j] == '"' || chars[j] == '\'') && text.len() <= 2 {
                prev_sig = Some('a');
                continue;
            }
            out.push(IdentToken {
                text,
                after_dot: prev_sig == Some('.'),
                next: chars.get(j).copied(),
                next2: chars.get(j + 1).copied(),
            });
            prev_sig = Some('a');
            continue;
        }
        if !c.is_whitespace() {
            prev_sig = Some(c);
        }
        i += 1;
    }
    out
}

/// Map from every declared symbol (parameters then variables) to whether it
/// is a parameter.
pub fn declared_symbols(s: &StructuredData) -> HashMap<&str, bool> {
    s.parameters
        .iter()
        .map(|p| (p.symbol.as_str(), true))
        .chain(s.variables.iter().map(|v| (v.symbol.as_str(), false)))
        .collect()
}
