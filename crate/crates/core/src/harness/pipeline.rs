//! Dataset-level runs under each pipeline mode.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BenchSample;
use crate::generation::generate_answer;
use crate::planner::{execute_retrieval, run_plan, Backends, Paradigm, PlannerConfig};
use crate::retrieval::Retriever;
use crate::state::{
    apply_decision, init_state, MultimodalQuery, PlanDecision, PlanTrace, RetrievalAction, Termination, TraceStep,
};

pub const FLAG_IMAGE_FALLBACK: &str = "image-fallback";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    /// Answer from the query alone.
    Origin,
    /// One text search on the original question.
    FixedText,
    /// One image search on the query image.
    FixedImage,
    CogplannerParallel,
    CogplannerSequential,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::Origin,
        PipelineMode::FixedText,
        PipelineMode::FixedImage,
        PipelineMode::CogplannerParallel,
        PipelineMode::CogplannerSequential,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PipelineMode::Origin => "origin",
            PipelineMode::FixedText => "fixed-text",
            PipelineMode::FixedImage => "fixed-image",
            PipelineMode::CogplannerParallel => "cogplanner-parallel",
            PipelineMode::CogplannerSequential => "cogplanner-sequential",
        }
    }

    pub fn paradigm(self) -> Option<Paradigm> {
        match self {
            PipelineMode::CogplannerParallel => Some(Paradigm::Parallel),
            PipelineMode::CogplannerSequential => Some(Paradigm::Sequential),
            _ => None,
        }
    }

    pub fn planned(paradigm: Paradigm) -> PipelineMode {
        match paradigm {
            Paradigm::Parallel => PipelineMode::CogplannerParallel,
            Paradigm::Sequential => PipelineMode::CogplannerSequential,
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PipelineMode::ALL.iter().map(|m| m.label()).collect();
                format!("unknown mode {s:?} (expected one of {})", names.join(", "))
            })
    }
}

fn failed_trace(id: &str, steps: Vec<TraceStep>, flags: Vec<String>, error: String) -> PlanTrace {
    PlanTrace {
        sample_id: id.to_string(),
        mode: None,
        steps,
        final_answer: String::new(),
        terminated_by: Termination::Failed,
        flags,
        error: Some(error),
    }
}

/// A single, unplanned step (or none) followed by generation.
fn run_fixed(
    query: MultimodalQuery,
    action: RetrievalAction,
    flags: Vec<String>,
    config: &PlannerConfig,
    backends: Backends<'_>,
) -> PlanTrace {
    let id = query.id.clone();
    let state = match init_state(query) {
        Ok(s) => s,
        Err(e) => return failed_trace(&id, vec![], flags, e.to_string()),
    };
    let decision = PlanDecision::new(action, state.current_queries().clone());
    let retriever = Retriever {
        backend: backends.search,
        limits: config.limits(),
        hook: backends.hook,
    };
    let (retrieved, step_flags) = execute_retrieval(&retriever, &state, &decision);
    let state = match apply_decision(&state, decision.clone(), retrieved.clone(), config.t_max.max(1)) {
        Ok(s) => s,
        Err(e) => return failed_trace(&id, vec![], flags, e.to_string()),
    };
    let steps = vec![TraceStep {
        decision,
        retrieved,
        expert_tokens: 0,
        expert_latency_ms: 0.0,
        flags: step_flags,
    }];
    // Origin answers from the question alone, as if nothing were planned.
    let answer = generate_answer(
        backends.generator,
        state.origin(),
        state.current_queries(),
        state.evidence(),
        config.evidence_budget,
        state.iteration(),
        backends.prompts,
    );
    match answer {
        Ok(out) => PlanTrace {
            sample_id: id,
            mode: None,
            steps,
            final_answer: out.value,
            terminated_by: if action == RetrievalAction::NoSearch {
                Termination::NoSearch
            } else {
                Termination::IterationCap
            },
            flags,
            error: None,
        },
        Err(e) => failed_trace(&id, steps, flags, e.to_string()),
    }
}

/// Runs one sample; never fails, errors end up in the trace.
pub fn run_sample(
    sample: &BenchSample,
    mode: PipelineMode,
    config: &PlannerConfig,
    backends: Backends<'_>,
) -> PlanTrace {
    let query = sample.query.clone();
    let mut trace = match mode {
        PipelineMode::Origin => run_fixed(query, RetrievalAction::NoSearch, vec![], config, backends),
        PipelineMode::FixedText => run_fixed(query, RetrievalAction::TextSearch, vec![], config, backends),
        PipelineMode::FixedImage if query.image.is_none() => run_fixed(
            query,
            RetrievalAction::NoSearch,
            vec![FLAG_IMAGE_FALLBACK.to_string()],
            config,
            backends,
        ),
        PipelineMode::FixedImage => run_fixed(query, RetrievalAction::ImageSearch, vec![], config, backends),
        PipelineMode::CogplannerParallel | PipelineMode::CogplannerSequential => {
            let config = PlannerConfig {
                paradigm: mode.paradigm().expect("planned mode"),
                ..*config
            };
            match run_plan(query, &config, backends) {
                Ok(trace) => trace,
                Err(e) => failed_trace(&sample.id, vec![], vec![], e.to_string()),
            }
        }
    };
    trace.mode = Some(mode.label().to_string());
    trace
}

/// Runs every sample, concurrently, returning traces in input order.
pub fn run_pipeline(
    samples: &[BenchSample],
    mode: PipelineMode,
    config: &PlannerConfig,
    backends: Backends<'_>,
) -> Vec<PlanTrace> {
    samples
        .par_iter()
        .map(|s| run_sample(s, mode, config, backends))
        .collect()
}

/// Ad-hoc single query wrapped as a sample.
pub fn adhoc_sample(query: MultimodalQuery) -> BenchSample {
    BenchSample {
        id: query.id.clone(),
        query,
        hop_count: 1,
        answer_type: super::AnswerType::OpenEnded,
        domain: "adhoc".into(),
        golden_answer: "-".into(),
        golden_trace: None,
    }
}
