//! Final answer synthesis from the original query, the final query set and
//! the accumulated evidence. Nothing else from the decision history reaches
//! the generator.

use thiserror::Error;
use tracing::warn;

use crate::expert::{
    image_note, numbered, parse, render_evidence_digest, ExpertBackend, ExpertError, ExpertRequest,
    ExpertRole, Outcome, PromptSet, RequestMeta, Usage,
};
use crate::state::{MultimodalQuery, QuerySet, RetrievedDoc};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("generation failed: {0}")]
    Backend(#[from] ExpertError),
    #[error("generator returned no answer")]
    EmptyAnswer,
}

pub fn evidence_section(digest: &str) -> String {
    if digest.is_empty() {
        String::new()
    } else {
        format!("\nReference material:\n{digest}\n")
    }
}

/// Builds the generation request: origin query (text and image), final
/// queries, and the evidence digest cut to `budget` tokens.
pub fn generation_request(
    origin: &MultimodalQuery,
    final_queries: &QuerySet,
    evidence: &[RetrievedDoc],
    budget: usize,
    iteration: usize,
    prompts: &PromptSet,
) -> Result<ExpertRequest, ExpertError> {
    let digest = render_evidence_digest(evidence, budget);
    let (system, user) = prompts.generate.render(&[
        ("origin", &origin.text),
        ("image_note", image_note(origin.image.as_ref())),
        ("queries", &numbered(final_queries.as_slice())),
        ("evidence_section", &evidence_section(&digest)),
    ]);
    let meta = RequestMeta {
        role: Some(ExpertRole::Generate),
        sample_id: origin.id.clone(),
        iteration,
        queries: final_queries.as_slice().to_vec(),
        evidence_docs: evidence.len(),
    };
    ExpertRequest::new(system, user, origin.image.iter().cloned().collect(), meta)
}

/// Returns the backend's answer verbatim (trimmed). A failed or empty reply
/// is retried once.
pub fn generate_answer(
    backend: &dyn ExpertBackend,
    origin: &MultimodalQuery,
    final_queries: &QuerySet,
    evidence: &[RetrievedDoc],
    budget: usize,
    iteration: usize,
    prompts: &PromptSet,
) -> Result<Outcome<String>, GenerationError> {
    let request = generation_request(origin, final_queries, evidence, budget, iteration, prompts)?;
    let mut usage = Usage::default();
    let mut last_error = None;
    for attempt in 0..2 {
        match backend.complete(&request) {
            Ok(response) => {
                usage = usage.then(Usage {
                    calls: 1,
                    prompt_tokens: response.prompt_tokens,
                    completion_tokens: response.completion_tokens,
                    latency_ms: response.latency_ms,
                });
                match parse::parse_answer(&response.text) {
                    Ok(answer) => {
                        return Ok(Outcome {
                            value: answer,
                            usage,
                            flags: vec![],
                        })
                    }
                    Err(_) => last_error = Some(GenerationError::EmptyAnswer),
                }
            }
            Err(e) => {
                warn!(attempt, error = %e, "generation call failed");
                last_error = Some(GenerationError::Backend(e));
            }
        }
    }
    Err(last_error.unwrap_or(GenerationError::EmptyAnswer))
}
