//! The iterative planning loop.
//!
//! Each iteration the expert reformulates the current queries and picks one
//! retrieval action. In the parallel paradigm both decisions see the previous
//! query set and run concurrently; in the sequential paradigm the action is
//! chosen after, and over, the reformulated queries. The chosen action is run
//! for every sub-query, the state advances, and once the plan terminates the
//! generator answers from the original query, the final queries and the
//! gathered evidence.

use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{
    reformulate, select_action, ExpertBackend, ExpertContext, ExpertError, PromptSet, Usage,
    DEFAULT_EVIDENCE_BUDGET,
};
use crate::generation::generate_answer;
use crate::retrieval::{ContentHook, NoopHook, RetrievalLimits, Retriever, SearchBackend};
use crate::state::{
    apply_decision, init_state, is_terminal, MultimodalQuery, PlanDecision, PlanState, PlanTrace,
    RetrievalAction, RetrievedDoc, StateError, Termination, TraceStep, DEFAULT_T_MAX,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("invalid planner config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    #[default]
    Parallel,
    Sequential,
}

impl std::str::FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "parallel" => Ok(Paradigm::Parallel),
            "sequential" => Ok(Paradigm::Sequential),
            other => Err(format!("unknown paradigm {other:?} (expected parallel or sequential)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub paradigm: Paradigm,
    pub t_max: usize,
    pub text_top_k: usize,
    pub text_token_cap: usize,
    pub image_min: usize,
    pub image_max: usize,
    pub evidence_budget: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let limits = RetrievalLimits::default();
        PlannerConfig {
            paradigm: Paradigm::Parallel,
            t_max: DEFAULT_T_MAX,
            text_top_k: limits.text_top_k,
            text_token_cap: limits.text_token_cap,
            image_min: limits.image_min,
            image_max: limits.image_max,
            evidence_budget: DEFAULT_EVIDENCE_BUDGET,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let fields = [
            ("t_max", self.t_max),
            ("text_top_k", self.text_top_k),
            ("text_token_cap", self.text_token_cap),
            ("image_min", self.image_min),
            ("image_max", self.image_max),
            ("evidence_budget", self.evidence_budget),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(PlanError::Config(format!("{name} must be positive")));
        }
        if self.image_min > self.image_max {
            return Err(PlanError::Config(format!(
                "image_min {} exceeds image_max {}",
                self.image_min, self.image_max
            )));
        }
        Ok(())
    }

    pub fn limits(&self) -> RetrievalLimits {
        RetrievalLimits {
            text_top_k: self.text_top_k,
            text_token_cap: self.text_token_cap,
            image_min: self.image_min,
            image_max: self.image_max,
        }
    }
}

/// Everything a plan talks to.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    /// Planning expert (reformulation and action selection).
    pub expert: &'a dyn ExpertBackend,
    /// Answer generator; may be a different model from the expert.
    pub generator: &'a dyn ExpertBackend,
    pub search: &'a dyn SearchBackend,
    pub hook: &'a dyn ContentHook,
    pub prompts: &'a PromptSet,
}

impl<'a> Backends<'a> {
    pub fn new(
        expert: &'a dyn ExpertBackend,
        generator: &'a dyn ExpertBackend,
        search: &'a dyn SearchBackend,
        prompts: &'a PromptSet,
    ) -> Self {
        Backends {
            expert,
            generator,
            search,
            hook: &NoopHook,
            prompts,
        }
    }
}

/// One iteration's decision with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    pub decision: PlanDecision,
    pub usage: Usage,
    pub flags: Vec<String>,
}

/// Reformulation and action selection from the same predecessor queries,
/// issued concurrently.
pub fn plan_step_parallel(
    expert: &dyn ExpertBackend,
    state: &PlanState,
    ctx: ExpertContext<'_>,
) -> Result<StepDecision, ExpertError> {
    let (reformed, action) = thread::scope(|s| {
        let reform = s.spawn(|| reformulate(expert, state, ctx));
        let action = select_action(expert, state, state.current_queries(), ctx);
        (reform.join().expect("reformulation thread panicked"), action)
    });
    let (reformed, action) = (reformed?, action?);
    let mut flags = reformed.flags;
    flags.extend(action.flags);
    Ok(StepDecision {
        decision: PlanDecision::new(action.value, reformed.value),
        usage: reformed.usage.alongside(action.usage),
        flags,
    })
}

/// Reformulation first; the action is then chosen over the reformulated
/// queries.
pub fn plan_step_sequential(
    expert: &dyn ExpertBackend,
    state: &PlanState,
    ctx: ExpertContext<'_>,
) -> Result<StepDecision, ExpertError> {
    let reformed = reformulate(expert, state, ctx)?;
    let action = select_action(expert, state, &reformed.value, ctx)?;
    let mut flags = reformed.flags;
    flags.extend(action.flags);
    Ok(StepDecision {
        decision: PlanDecision::new(action.value, reformed.value),
        usage: reformed.usage.then(action.usage),
        flags,
    })
}

pub fn plan_step(
    paradigm: Paradigm,
    expert: &dyn ExpertBackend,
    state: &PlanState,
    ctx: ExpertContext<'_>,
) -> Result<StepDecision, ExpertError> {
    match paradigm {
        Paradigm::Parallel => plan_step_parallel(expert, state, ctx),
        Paradigm::Sequential => plan_step_sequential(expert, state, ctx),
    }
}

/// Runs `decision`'s action once per sub-query and concatenates the results.
///
/// A failing sub-query contributes nothing and is flagged; the step goes on.
pub fn execute_retrieval(
    retriever: &Retriever<'_>,
    state: &PlanState,
    decision: &PlanDecision,
) -> (Vec<RetrievedDoc>, Vec<String>) {
    let iteration = state.iteration() + 1;
    let action = decision.action;
    if action == RetrievalAction::NoSearch {
        return (Vec::new(), Vec::new());
    }
    let image = state.search_image();
    if action == RetrievalAction::ImageSearch && image.is_none() {
        return (Vec::new(), vec!["image-search-without-image".to_string()]);
    }
    let per_query: Vec<(Vec<RetrievedDoc>, Vec<String>)> = thread::scope(|s| {
        let handles: Vec<_> = decision
            .query_set
            .iter()
            .map(|query| {
                s.spawn(move || match action {
                    RetrievalAction::TextSearch => match retriever.text(query, iteration) {
                        Ok(docs) => (docs, vec![]),
                        Err(e) => (vec![], vec![format!("retrieval-failed: {query}: {e}")]),
                    },
                    _ => match retriever.image(image.expect("checked above"), query, iteration) {
                        Ok(found) => {
                            let flags = if found.below_minimum {
                                vec![format!("image-below-minimum: {query}")]
                            } else {
                                vec![]
                            };
                            (found.docs, flags)
                        }
                        Err(e) => (vec![], vec![format!("retrieval-failed: {query}: {e}")]),
                    },
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("retrieval thread panicked"))
            .collect()
    });
    let mut docs = Vec::new();
    let mut flags = Vec::new();
    for (d, f) in per_query {
        docs.extend(d);
        flags.extend(f);
    }
    (docs, flags)
}

fn failed(sample_id: &str, steps: Vec<TraceStep>, error: String) -> PlanTrace {
    PlanTrace {
        sample_id: sample_id.to_string(),
        mode: None,
        steps,
        final_answer: String::new(),
        terminated_by: Termination::Failed,
        flags: vec![],
        error: Some(error),
    }
}

/// Plans, retrieves and answers one query.
///
/// Invalid queries or configs are errors. Backend failures that survive the
/// retries end the run early with a trace marked `failed`.
pub fn run_plan(
    query: MultimodalQuery,
    config: &PlannerConfig,
    backends: Backends<'_>,
) -> Result<PlanTrace, PlanError> {
    config.validate()?;
    let sample_id = query.id.clone();
    let mut state = init_state(query)?;
    let ctx = ExpertContext {
        prompts: backends.prompts,
        evidence_budget: config.evidence_budget,
    };
    let retriever = Retriever {
        backend: backends.search,
        limits: config.limits(),
        hook: backends.hook,
    };
    let mut steps = Vec::new();

    while !is_terminal(&state, config.t_max) {
        let step = match plan_step(config.paradigm, backends.expert, &state, ctx) {
            Ok(step) => step,
            Err(e) => return Ok(failed(&sample_id, steps, e.to_string())),
        };
        let (retrieved, retrieval_flags) = execute_retrieval(&retriever, &state, &step.decision);
        state = apply_decision(&state, step.decision.clone(), retrieved.clone(), config.t_max)?;
        let mut flags = step.flags;
        flags.extend(retrieval_flags);
        steps.push(TraceStep {
            decision: step.decision,
            retrieved,
            expert_tokens: step.usage.completion_tokens,
            expert_latency_ms: step.usage.latency_ms,
            flags,
        });
    }

    let answer = match generate_answer(
        backends.generator,
        state.origin(),
        state.current_queries(),
        state.evidence(),
        config.evidence_budget,
        state.iteration(),
        backends.prompts,
    ) {
        Ok(out) => out.value,
        Err(e) => return Ok(failed(&sample_id, steps, e.to_string())),
    };

    let terminated_by = if state.last_action() == Some(RetrievalAction::NoSearch) {
        Termination::NoSearch
    } else {
        Termination::IterationCap
    };
    Ok(PlanTrace {
        sample_id,
        mode: None,
        steps,
        final_answer: answer,
        terminated_by,
        flags: vec![],
        error: None,
    })
}
