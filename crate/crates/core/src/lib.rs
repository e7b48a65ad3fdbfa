//! Agentic multimodal retrieval planning.
//!
//! A planning loop decides, per iteration, how to rewrite the user's query and
//! whether to search text, search images or stop; retrieved evidence then
//! feeds a final answer. Evaluation tooling scores traces against a
//! benchmark.

pub mod evalkit;
pub mod expert;
pub mod generation;
pub mod harness;
pub mod planner;
pub mod retrieval;
pub mod state;
pub mod tokens;

#[cfg(test)]
mod test_support;

pub use expert::{ExpertBackend, ExpertError, PromptSet, ScriptedExpert};
pub use planner::{run_plan, Backends, Paradigm, PlanError, PlannerConfig};
pub use retrieval::{LocalCorpus, SearchBackend};
pub use state::{ImageRef, MultimodalQuery, PlanTrace, QuerySet, RetrievalAction, Termination};
