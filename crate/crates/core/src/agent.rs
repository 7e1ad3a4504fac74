//! Shared plumbing for every agent call: render the stage prompt, complete
//! it, parse the answer, and re-prompt once when the answer is malformed.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::gateway::{GatewayError, LanguageModel, SamplingConfig, Stage};
use crate::prompts::{ParseError, PromptSet, RenderError};
use crate::schema::SchemaError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("generated code references undeclared identifiers: {}", .0.join(", "))]
    Undeclared(Vec<String>),
}

impl AgentError {
    /// Malformed answers earn one re-prompt; transport and usage errors do not.
    pub fn is_malformed_answer(&self) -> bool {
        matches!(
            self,
            AgentError::Parse(_) | AgentError::Schema(_) | AgentError::Undeclared(_)
        )
    }
}

#[derive(Clone, Copy)]
pub struct Agents<'a> {
    pub llm: &'a dyn LanguageModel,
    pub prompts: &'a PromptSet,
    pub sampling: SamplingConfig,
}

impl<'a> Agents<'a> {
    pub fn new(llm: &'a dyn LanguageModel, prompts: &'a PromptSet, sampling: SamplingConfig) -> Self {
        Self {
            llm,
            prompts,
            sampling,
        }
    }

    pub fn render(&self, stage: Stage, bindings: &BTreeMap<&str, String>) -> Result<String, AgentError> {
        Ok(self.prompts.get(stage).render(bindings)?)
    }

    pub fn ask<T>(
        &self,
        stage: Stage,
        bindings: &BTreeMap<&str, String>,
        parse: impl Fn(&str) -> Result<T, AgentError>,
    ) -> Result<T, AgentError> {
        let prompt = self.render(stage, bindings)?;
        let request = self.sampling.request(stage, prompt)?;
        let first = self.llm.complete(&request)?;
        match parse(&first) {
            Err(err) if err.is_malformed_answer() => {
                log::warn!("{stage} answer rejected ({err}); asking once more");
                let second = self.llm.complete(&request)?;
                parse(&second)
            }
            other => other,
        }
    }
}
