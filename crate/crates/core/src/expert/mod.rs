//! The planning expert: backend contract, prompt assembly and the two
//! planning decisions (query reformulation and retrieval action selection).

mod digest;
mod instrument;
pub mod parse;
pub mod prompts;
mod remote;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub use digest::{render_evidence_digest, DEFAULT_EVIDENCE_BUDGET};
pub use instrument::{EchoExpert, RecordingExpert};
pub use parse::{parse_expert_output, Expected, ParseError, Parsed};
pub use prompts::{PromptSet, Template};
pub(crate) use remote::image_url as inline_image_url;
pub use remote::{OpenAiCompatExpert, RemoteExpertConfig};

/// Environment variable names read by the remote backend.
pub mod remote_env {
    pub use super::remote::{ENV_KEY as KEY, ENV_MODEL as MODEL, ENV_URL as URL};
}
pub use scripted::{Script, ScriptStep, ScriptedExpert};

use crate::state::{DocKind, ImageRef, PlanState, QuerySet, RetrievalAction};
use crate::tokens;

pub const MAX_REQUEST_IMAGES: usize = 8;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

/// Degradation flag: reformulation output unparseable, queries kept.
pub const FLAG_REFORMULATION_FALLBACK: &str = "reformulation-fallback";
/// Degradation flag: action output unparseable, NO_SEARCH chosen.
pub const FLAG_ACTION_FALLBACK: &str = "action-fallback";
/// Degradation flag: IMAGE_SEARCH requested with no image available.
pub const FLAG_IMAGE_SEARCH_COERCED: &str = "image-search-coerced";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpertError {
    #[error("expert transport error: {0}")]
    Transport(String),
    #[error("invalid expert request: {0}")]
    InvalidRequest(String),
    #[error("expert configuration error: {0}")]
    Config(String),
    #[error("unparseable expert output: {0}")]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertRole {
    Reformulate,
    SelectAction,
    Generate,
    ExtractClaims,
    JudgeClaim,
}

/// Out-of-band call context. Remote backends ignore it; deterministic
/// backends key their answers on it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RequestMeta {
    pub role: Option<ExpertRole>,
    pub sample_id: String,
    pub iteration: usize,
    /// The query set this call reasons over.
    pub queries: Vec<String>,
    /// Retrieved documents available to the call.
    pub evidence_docs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRequest {
    pub system_prompt: String,
    pub user_text: String,
    pub images: Vec<ImageRef>,
    pub max_output_tokens: u32,
    pub meta: RequestMeta,
}

impl ExpertRequest {
    pub fn new(
        system_prompt: String,
        user_text: String,
        images: Vec<ImageRef>,
        meta: RequestMeta,
    ) -> Result<Self, ExpertError> {
        if user_text.trim().is_empty() {
            return Err(ExpertError::InvalidRequest("empty user text".into()));
        }
        if images.len() > MAX_REQUEST_IMAGES {
            return Err(ExpertError::InvalidRequest(format!(
                "{} images exceed the limit of {MAX_REQUEST_IMAGES}",
                images.len()
            )));
        }
        Ok(ExpertRequest {
            system_prompt,
            user_text,
            images,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            meta,
        })
    }

    pub fn prompt_tokens(&self) -> u64 {
        (tokens::count(&self.system_prompt) + tokens::count(&self.user_text)) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: f64,
}

/// Any multimodal chat model able to answer a prompt.
///
/// Implementations are shared across threads: the parallel paradigm issues
/// two calls at once and samples may be evaluated concurrently.
pub trait ExpertBackend: Send + Sync {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError>;
}

impl<T: ExpertBackend + ?Sized> ExpertBackend for std::sync::Arc<T> {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        (**self).complete(request)
    }
}

impl<T: ExpertBackend + ?Sized> ExpertBackend for &T {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        (**self).complete(request)
    }
}

/// Token and latency accounting across one or more expert calls.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Usage {
    pub calls: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: f64,
}

impl Usage {
    fn record(&mut self, response: &ExpertResponse) {
        self.calls += 1;
        self.prompt_tokens += response.prompt_tokens;
        self.completion_tokens += response.completion_tokens;
        self.latency_ms += response.latency_ms;
    }

    /// Calls made one after the other: latencies add up.
    pub fn then(self, other: Usage) -> Usage {
        Usage {
            calls: self.calls + other.calls,
            prompt_tokens: self.prompt_tokens + other.prompt_tokens,
            completion_tokens: self.completion_tokens + other.completion_tokens,
            latency_ms: self.latency_ms + other.latency_ms,
        }
    }

    /// Calls made concurrently: wall-clock latency is the slower one.
    pub fn alongside(self, other: Usage) -> Usage {
        Usage {
            latency_ms: self.latency_ms.max(other.latency_ms),
            ..self.then(other)
        }
    }
}

/// A decision together with how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub value: T,
    pub usage: Usage,
    pub flags: Vec<String>,
}

impl<T> Outcome<T> {
    pub fn degraded(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Shared inputs for building expert prompts.
#[derive(Debug, Clone, Copy)]
pub struct ExpertContext<'a> {
    pub prompts: &'a PromptSet,
    pub evidence_budget: usize,
}

pub(crate) fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {q}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub(crate) fn image_note(image: Option<&ImageRef>) -> &'static str {
    if image.is_some() {
        "An image accompanies the question (attached)."
    } else {
        "No image accompanies the question."
    }
}

fn origin_images(state: &PlanState) -> Vec<ImageRef> {
    state.origin().image.iter().cloned().collect()
}

/// Whether an image search has something to search with.
pub fn image_search_available(state: &PlanState) -> bool {
    state.origin().image.is_some() || state.evidence().iter().any(|d| d.kind == DocKind::Image)
}

/// Calls `backend` and parses its reply, retrying once on a parse failure.
/// `Ok(None)` means both attempts were unparseable.
pub(crate) fn complete_parsed<T>(
    backend: &dyn ExpertBackend,
    request: &ExpertRequest,
    usage: &mut Usage,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<Option<T>, ExpertError> {
    for attempt in 0..2 {
        let response = backend.complete(request)?;
        usage.record(&response);
        match parse(&response.text) {
            Ok(value) => return Ok(Some(value)),
            Err(e) => warn!(attempt, role = ?request.meta.role, error = %e, "unparseable expert output"),
        }
    }
    Ok(None)
}

/// Query reformulation: refines and decomposes the current queries given the
/// evidence gathered so far.
///
/// Unparseable output (after one retry) keeps the current queries and flags
/// the outcome as degraded.
pub fn reformulate(
    backend: &dyn ExpertBackend,
    state: &PlanState,
    ctx: ExpertContext<'_>,
) -> Result<Outcome<QuerySet>, ExpertError> {
    let current = state.current_queries();
    let evidence = render_evidence_digest(state.evidence(), ctx.evidence_budget);
    let max_queries = crate::state::N_MAX.to_string();
    let (system, user) = ctx.prompts.reformulate.render(&[
        ("origin", &state.origin().text),
        ("image_note", image_note(state.origin().image.as_ref())),
        ("queries", &numbered(current.as_slice())),
        ("evidence", evidence_or_none(&evidence)),
        ("max_queries", &max_queries),
    ]);
    let meta = RequestMeta {
        role: Some(ExpertRole::Reformulate),
        sample_id: state.origin().id.clone(),
        iteration: state.iteration(),
        queries: current.as_slice().to_vec(),
        evidence_docs: state.evidence().len(),
    };
    let request = ExpertRequest::new(system, user, origin_images(state), meta)?;
    let mut usage = Usage::default();
    let parsed = complete_parsed(backend, &request, &mut usage, |raw| {
        parse::parse_query_set(raw)
            .and_then(|items| QuerySet::new(items).map_err(|_| ParseError::NoList))
    })?;
    Ok(match parsed {
        Some(value) => Outcome {
            value,
            usage,
            flags: vec![],
        },
        None => Outcome {
            value: current.clone(),
            usage,
            flags: vec![FLAG_REFORMULATION_FALLBACK.into()],
        },
    })
}

/// Retrieval action selection over `queries` given the evidence so far.
///
/// IMAGE_SEARCH is only offered when an image is available; if the expert
/// picks it anyway the action becomes TEXT_SEARCH. Unparseable output (after
/// one retry) becomes NO_SEARCH. Both cases are flagged.
pub fn select_action(
    backend: &dyn ExpertBackend,
    state: &PlanState,
    queries: &QuerySet,
    ctx: ExpertContext<'_>,
) -> Result<Outcome<RetrievalAction>, ExpertError> {
    let image_ok = image_search_available(state);
    let mut options = vec![
        "TEXT_SEARCH: search the web for text passages about the queries",
    ];
    if image_ok {
        options.push("IMAGE_SEARCH: search for images similar to the available image, with captions");
    }
    options.push("NO_SEARCH: no further retrieval is needed");
    let options = options
        .iter()
        .map(|o| format!("- {o}"))
        .collect::<Vec<_>>()
        .join("\n");
    let evidence = render_evidence_digest(state.evidence(), ctx.evidence_budget);
    let (system, user) = ctx.prompts.select_action.render(&[
        ("origin", &state.origin().text),
        ("image_note", image_note(state.origin().image.as_ref())),
        ("queries", &numbered(queries.as_slice())),
        ("evidence", evidence_or_none(&evidence)),
        ("actions", &options),
    ]);
    let meta = RequestMeta {
        role: Some(ExpertRole::SelectAction),
        sample_id: state.origin().id.clone(),
        iteration: state.iteration(),
        queries: queries.as_slice().to_vec(),
        evidence_docs: state.evidence().len(),
    };
    let request = ExpertRequest::new(system, user, origin_images(state), meta)?;
    let mut usage = Usage::default();
    let parsed = complete_parsed(backend, &request, &mut usage, parse::parse_action)?;
    let (action, flags) = match parsed {
        None => (RetrievalAction::NoSearch, vec![FLAG_ACTION_FALLBACK.to_string()]),
        Some(action) => coerce_action(action, image_ok),
    };
    Ok(Outcome {
        value: action,
        usage,
        flags,
    })
}

/// Makes an action executable: IMAGE_SEARCH without an image becomes TEXT_SEARCH.
pub fn coerce_action(action: RetrievalAction, image_available: bool) -> (RetrievalAction, Vec<String>) {
    if action == RetrievalAction::ImageSearch && !image_available {
        (
            RetrievalAction::TextSearch,
            vec![FLAG_IMAGE_SEARCH_COERCED.to_string()],
        )
    } else {
        (action, vec![])
    }
}

fn evidence_or_none(digest: &str) -> &str {
    if digest.is_empty() {
        "(none yet)"
    } else {
        digest
    }
}
