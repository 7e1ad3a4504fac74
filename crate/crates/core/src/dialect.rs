//! Target dialects: the code templates and boilerplate of one modeling runtime.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{placeholders, substitute};
use crate::schema::{Parameter, VarType, VariableDecl};

#[derive(Debug, Error)]
pub enum DialectError {
    #[error("cannot read dialect file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid dialect definition: {0}")]
    Invalid(String),
    #[error("unknown built-in dialect `{0}`")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarTypeNames {
    pub continuous: String,
    pub integer: String,
    pub binary: String,
}

impl VarTypeNames {
    pub fn get(&self, t: VarType) -> &str {
        match t {
            VarType::Continuous => &self.continuous,
            VarType::Integer => &self.integer,
            VarType::Binary => &self.binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetDialect {
    pub name: String,
    /// Placeholders: `{symbol}`.
    pub scalar_param_template: String,
    /// Placeholders: `{symbol}`, `{shape_comment}`.
    pub array_param_template: String,
    /// Placeholders: `{symbol}`, `{shape}`, `{vtype}`, `{shape_comment}`.
    pub variable_template: String,
    pub boilerplate_header: String,
    /// Placeholder `{variables}` receives a list literal of variable symbols
    /// so the footer can report the solution.
    pub boilerplate_footer: String,
    pub vtypes: VarTypeNames,
    /// Coding conventions shown to the translation agent.
    #[serde(default)]
    pub conventions: String,
    /// Names that generated fragments may use without declaring them.
    #[serde(default)]
    pub identifiers: Vec<String>,
}

pub const BUILTIN_DIALECTS: [&str; 2] = ["gurobipy", "python-mip"];

impl TargetDialect {
    pub fn builtin(name: &str) -> Result<Self, DialectError> {
        let text = match name {
            "gurobipy" => include_str!("../dialects/gurobipy.json"),
            "python-mip" => include_str!("../dialects/python-mip.json"),
            other => return Err(DialectError::Unknown(other.to_string())),
        };
        Self::from_json(text)
    }

    /// The dialect matching the runtime conventions of the extraction format
    /// (`RollWidth = data["RollWidth"]`).
    pub fn default_dialect() -> Self {
        Self::builtin("gurobipy").expect("built-in dialect is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, DialectError> {
        let dialect: Self =
            serde_json::from_str(text).map_err(|e| DialectError::Invalid(e.to_string()))?;
        dialect.validate()?;
        Ok(dialect)
    }

    pub fn load(path: &Path) -> Result<Self, DialectError> {
        let text = fs::read_to_string(path).map_err(|source| DialectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Built-in name or path to a dialect JSON file.
    pub fn resolve(name: &str) -> Result<Self, DialectError> {
        if BUILTIN_DIALECTS.contains(&name) {
            Self::builtin(name)
        } else {
            Self::load(Path::new(name))
        }
    }

    fn validate(&self) -> Result<(), DialectError> {
        let checks: [(&str, &str, &[&str]); 5] = [
            ("scalar_param_template", &self.scalar_param_template, &["symbol"]),
            ("array_param_template", &self.array_param_template, &["symbol", "shape_comment"]),
            (
                "variable_template",
                &self.variable_template,
                &["symbol", "shape", "vtype", "shape_comment"],
            ),
            ("boilerplate_header", &self.boilerplate_header, &[]),
            ("boilerplate_footer", &self.boilerplate_footer, &["variables"]),
        ];
        if self.name.trim().is_empty() {
            return Err(DialectError::Invalid("empty name".into()));
        }
        for (field, body, allowed) in checks {
            if field != "boilerplate_header" && body.trim().is_empty() {
                return Err(DialectError::Invalid(format!("{field} is empty")));
            }
            if let Some(bad) = placeholders(body).iter().find(|p| !allowed.contains(&p.as_str())) {
                return Err(DialectError::Invalid(format!(
                    "{field} uses unsupported placeholder {{{bad}}}"
                )));
            }
        }
        if !self.boilerplate_footer.contains("{variables}") {
            return Err(DialectError::Invalid(
                "boilerplate_footer must reference {variables} to report the solution".into(),
            ));
        }
        Ok(())
    }

    pub fn render_parameter(&self, p: &Parameter) -> String {
        let mut b = BTreeMap::new();
        b.insert("symbol", p.symbol.clone());
        if p.is_scalar() {
            fill(&self.scalar_param_template, &b)
        } else {
            b.insert("shape_comment", shape_comment(&p.shape));
            fill(&self.array_param_template, &b)
        }
    }

    pub fn render_variable(&self, v: &VariableDecl) -> String {
        let mut b = BTreeMap::new();
        b.insert("symbol", v.symbol.clone());
        b.insert("shape", v.shape.join(", "));
        b.insert("vtype", self.vtypes.get(v.var_type).to_string());
        b.insert("shape_comment", shape_comment(&v.shape));
        fill(&self.variable_template, &b)
    }

    pub fn render_footer(&self, variables: &[VariableDecl]) -> String {
        let list = variables
            .iter()
            .map(|v| format!("\"{}\"", v.symbol))
            .collect::<Vec<_>>()
            .join(", ");
        let mut b = BTreeMap::new();
        b.insert("variables", format!("[{list}]"));
        fill(&self.boilerplate_footer, &b)
    }
}

fn fill(template: &str, bindings: &BTreeMap<&str, String>) -> String {
    substitute(template, bindings).expect("dialect placeholders checked at load time")
}

/// Python list literal of the dimension symbols: `['NumPatterns', 'NumWidths']`.
pub fn shape_comment(shape: &[String]) -> String {
    let items: Vec<String> = shape.iter().map(|s| format!("'{s}'")).collect();
    format!("[{}]", items.join(", "))
}
