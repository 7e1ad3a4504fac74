//! Natural-language optimization problems to solver programs, with a
//! reconstruct-and-compare loop that finds and regenerates code fragments
//! whose meaning drifted from the problem text.

pub mod agent;
pub mod dialect;
pub mod gateway;
pub mod prompts;
pub mod schema;
pub mod translator;
pub mod assembly;
pub mod engine;
pub mod sandbox;
pub mod verifier;
pub mod bench;
pub mod config;
pub mod pipeline;
