use std::sync::Mutex;

use super::{numbered, ExpertBackend, ExpertError, ExpertRequest, ExpertResponse, ExpertRole};
use crate::tokens;

/// Deterministic expert that hands its input back.
///
/// Reformulation returns the incoming queries unchanged, action selection
/// always answers NO_SEARCH, generation answers with the final queries
/// joined by spaces, and anything else echoes the user prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoExpert;

impl ExpertBackend for EchoExpert {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        let text = match request.meta.role {
            Some(ExpertRole::Reformulate) => numbered(&request.meta.queries),
            Some(ExpertRole::SelectAction) => "Action: NO_SEARCH".to_string(),
            Some(ExpertRole::Generate) => request.meta.queries.join(" "),
            _ => request.user_text.clone(),
        };
        Ok(ExpertResponse {
            prompt_tokens: request.prompt_tokens(),
            completion_tokens: tokens::count(&text) as u64,
            text,
            latency_ms: 0.0,
        })
    }
}

/// Wraps a backend and keeps a copy of every request it sees.
#[derive(Debug)]
pub struct RecordingExpert<B> {
    inner: B,
    seen: Mutex<Vec<ExpertRequest>>,
}

impl<B: ExpertBackend> RecordingExpert<B> {
    pub fn new(inner: B) -> Self {
        RecordingExpert {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ExpertRequest> {
        self.seen.lock().expect("recorder lock").clone()
    }

    pub fn requests_for(&self, role: ExpertRole) -> Vec<ExpertRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.meta.role == Some(role))
            .collect()
    }

    pub fn clear(&self) {
        self.seen.lock().expect("recorder lock").clear();
    }
}

impl<B: ExpertBackend> ExpertBackend for RecordingExpert<B> {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        self.seen.lock().expect("recorder lock").push(request.clone());
        self.inner.complete(request)
    }
}
