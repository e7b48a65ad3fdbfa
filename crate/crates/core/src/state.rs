//! Planning domain types and the state machine that threads them.
//!
//! A plan starts from the multimodal query (`init_state`), advances one
//! iteration per decision (`apply_decision`) and stops once the last action
//! was `NoSearch` or the iteration cap is reached (`is_terminal`). States are
//! values: every transition returns a fresh `PlanState`.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of sub-queries in one query set.
pub const N_MAX: usize = 5;

/// Default iteration cap.
pub const DEFAULT_T_MAX: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("iteration cap of {t_max} reached")]
    IterationCap { t_max: usize },
}

impl StateError {
    fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        StateError::Validation {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediaKind {
    Path,
    Url,
    InlineBytes,
}

/// Opaque reference to an image: a filesystem path, an http(s) URL, or an
/// inline `data:` URI carrying base64 bytes.
///
/// Serialized as the bare locator string; the media kind is inferred from
/// its prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ImageRef {
    locator: String,
    media_kind: MediaKind,
}

impl ImageRef {
    pub fn parse(locator: impl Into<String>) -> Result<Self, StateError> {
        let locator = locator.into();
        if locator.trim().is_empty() {
            return Err(StateError::validation("image", "empty locator"));
        }
        let media_kind = if locator.starts_with("http://") || locator.starts_with("https://") {
            MediaKind::Url
        } else if locator.starts_with("data:") {
            MediaKind::InlineBytes
        } else {
            MediaKind::Path
        };
        let image = ImageRef {
            locator,
            media_kind,
        };
        if media_kind == MediaKind::InlineBytes && image.inline_payload()?.is_empty() {
            return Err(StateError::validation("image", "inline payload is empty"));
        }
        Ok(image)
    }

    pub fn from_bytes(mime: &str, bytes: &[u8]) -> Result<Self, StateError> {
        let payload = base64::engine::general_purpose::STANDARD.encode(bytes);
        Self::parse(format!("data:{mime};base64,{payload}"))
    }

    pub fn locator(&self) -> &str {
        &self.locator
    }

    pub fn media_kind(&self) -> MediaKind {
        self.media_kind
    }

    /// Relative paths are re-rooted at `root`; URLs and inline data pass through.
    pub fn resolve_against(&self, root: &Path) -> ImageRef {
        match self.media_kind {
            MediaKind::Path if Path::new(&self.locator).is_relative() => ImageRef {
                locator: root.join(&self.locator).to_string_lossy().into_owned(),
                media_kind: MediaKind::Path,
            },
            _ => self.clone(),
        }
    }

    /// Decoded bytes of an inline image.
    pub fn inline_payload(&self) -> Result<Vec<u8>, StateError> {
        let encoded = self
            .locator
            .split_once(";base64,")
            .map(|(_, p)| p)
            .ok_or_else(|| StateError::validation("image", "inline data must be base64"))?;
        base64::engine::general_purpose::STANDARD
            .decode(encoded.trim())
            .map_err(|e| StateError::validation("image", format!("bad base64 payload: {e}")))
    }

    /// Checks that the image can be handed to a backend right now.
    ///
    /// Paths must open as regular files. URLs are only checked syntactically
    /// since no network access is assumed at plan start.
    pub fn check_readable(&self) -> Result<(), StateError> {
        match self.media_kind {
            MediaKind::Path => {
                let path = Path::new(&self.locator);
                let ok = path.is_file() && File::open(path).is_ok();
                if ok {
                    Ok(())
                } else {
                    Err(StateError::validation(
                        "image",
                        format!("unreadable image {}", self.locator),
                    ))
                }
            }
            MediaKind::Url => url::Url::parse(&self.locator)
                .map(|_| ())
                .map_err(|e| StateError::validation("image", format!("unreadable image url: {e}"))),
            MediaKind::InlineBytes => self.inline_payload().and_then(|bytes| {
                if bytes.is_empty() {
                    Err(StateError::validation("image", "inline payload is empty"))
                } else {
                    Ok(())
                }
            }),
        }
    }
}

impl From<ImageRef> for String {
    fn from(image: ImageRef) -> String {
        image.locator
    }
}

impl TryFrom<String> for ImageRef {
    type Error = StateError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ImageRef::parse(value)
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.media_kind {
            MediaKind::InlineBytes => write!(f, "<inline image>"),
            _ => f.write_str(&self.locator),
        }
    }
}

/// A question paired with an optional image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalQuery {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
}

impl MultimodalQuery {
    pub fn new(id: impl Into<String>, text: impl Into<String>, image: Option<ImageRef>) -> Self {
        MultimodalQuery {
            id: id.into(),
            text: text.into(),
            image,
        }
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.text.trim().is_empty() {
            return Err(StateError::validation("text", "empty text"));
        }
        if let Some(image) = &self.image {
            image.check_readable()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RetrievalAction {
    TextSearch,
    ImageSearch,
    NoSearch,
}

impl RetrievalAction {
    pub const ALL: [RetrievalAction; 3] = [
        RetrievalAction::TextSearch,
        RetrievalAction::ImageSearch,
        RetrievalAction::NoSearch,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RetrievalAction::TextSearch => "TEXT_SEARCH",
            RetrievalAction::ImageSearch => "IMAGE_SEARCH",
            RetrievalAction::NoSearch => "NO_SEARCH",
        }
    }
}

impl fmt::Display for RetrievalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Ordered, duplicate-free list of 1..=N_MAX non-empty sub-queries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct QuerySet(Vec<String>);

impl QuerySet {
    pub fn new(queries: Vec<String>) -> Result<Self, StateError> {
        if queries.is_empty() {
            return Err(StateError::validation("queries", "query set is empty"));
        }
        if queries.len() > N_MAX {
            return Err(StateError::validation(
                "queries",
                format!("{} sub-queries exceed the cap of {N_MAX}", queries.len()),
            ));
        }
        let mut seen = HashSet::new();
        for q in &queries {
            if q.trim().is_empty() {
                return Err(StateError::validation("queries", "empty sub-query"));
            }
            if !seen.insert(q.as_str()) {
                return Err(StateError::validation("queries", format!("duplicate sub-query {q:?}")));
            }
        }
        Ok(QuerySet(queries))
    }

    pub fn single(query: impl Into<String>) -> Result<Self, StateError> {
        Self::new(vec![query.into()])
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }
}

impl TryFrom<Vec<String>> for QuerySet {
    type Error = StateError;

    fn try_from(value: Vec<String>) -> Result<Self, Self::Error> {
        QuerySet::new(value)
    }
}

impl From<QuerySet> for Vec<String> {
    fn from(set: QuerySet) -> Vec<String> {
        set.0
    }
}

impl<'a> IntoIterator for &'a QuerySet {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Text,
    Image,
}

/// One evidence unit: a text passage, or an image candidate with its caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub kind: DocKind,
    pub source_id: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    pub iteration: usize,
    pub query: String,
    pub token_count: usize,
}

impl RetrievedDoc {
    pub fn text(
        source_id: impl Into<String>,
        content: impl Into<String>,
        iteration: usize,
        query: impl Into<String>,
    ) -> Self {
        let content = content.into();
        RetrievedDoc {
            kind: DocKind::Text,
            source_id: source_id.into(),
            token_count: crate::tokens::count(&content),
            content,
            image: None,
            iteration,
            query: query.into(),
        }
    }

    pub fn image(
        source_id: impl Into<String>,
        caption: impl Into<String>,
        image: ImageRef,
        iteration: usize,
        query: impl Into<String>,
    ) -> Self {
        let content = caption.into();
        RetrievedDoc {
            kind: DocKind::Image,
            source_id: source_id.into(),
            token_count: crate::tokens::count(&content),
            content,
            image: Some(image),
            iteration,
            query: query.into(),
        }
    }

    fn key(&self) -> (DocKind, &str) {
        (self.kind, self.source_id.as_str())
    }

    fn check(&self) -> Result<(), StateError> {
        match (self.kind, &self.image) {
            (DocKind::Image, None) => Err(StateError::Contract(format!(
                "image doc {} has no image",
                self.source_id
            ))),
            (DocKind::Text, Some(_)) => Err(StateError::Contract(format!(
                "text doc {} carries an image",
                self.source_id
            ))),
            _ => Ok(()),
        }
    }
}

/// One iteration's retrieval action together with its reformulated queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDecision {
    pub action: RetrievalAction,
    #[serde(rename = "queries")]
    pub query_set: QuerySet,
}

impl PlanDecision {
    pub fn new(action: RetrievalAction, query_set: QuerySet) -> Self {
        PlanDecision { action, query_set }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanState {
    iteration: usize,
    current_queries: QuerySet,
    evidence: Vec<RetrievedDoc>,
    history: Vec<PlanDecision>,
    origin: MultimodalQuery,
}

impl PlanState {
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn current_queries(&self) -> &QuerySet {
        &self.current_queries
    }

    pub fn evidence(&self) -> &[RetrievedDoc] {
        &self.evidence
    }

    pub fn history(&self) -> &[PlanDecision] {
        &self.history
    }

    pub fn origin(&self) -> &MultimodalQuery {
        &self.origin
    }

    pub fn last_action(&self) -> Option<RetrievalAction> {
        self.history.last().map(|d| d.action)
    }

    /// The image an image search would use: the query's own image, else the
    /// newest retrieved image.
    pub fn search_image(&self) -> Option<&ImageRef> {
        self.origin.image.as_ref().or_else(|| {
            self.evidence
                .iter()
                .rev()
                .find(|d| d.kind == DocKind::Image)
                .and_then(|d| d.image.as_ref())
        })
    }
}

pub fn init_state(query: MultimodalQuery) -> Result<PlanState, StateError> {
    query.validate()?;
    let current_queries = QuerySet::single(query.text.clone())?;
    Ok(PlanState {
        iteration: 0,
        current_queries,
        evidence: Vec::new(),
        history: Vec::new(),
        origin: query,
    })
}

/// Advances `state` by one decision and the documents it retrieved.
///
/// Evidence is deduplicated on `(kind, source_id)`; the earliest copy wins.
pub fn apply_decision(
    state: &PlanState,
    decision: PlanDecision,
    retrieved: Vec<RetrievedDoc>,
    t_max: usize,
) -> Result<PlanState, StateError> {
    if state.iteration >= t_max {
        return Err(StateError::IterationCap { t_max });
    }
    if decision.action == RetrievalAction::NoSearch && !retrieved.is_empty() {
        return Err(StateError::Contract(format!(
            "{} documents supplied with NO_SEARCH",
            retrieved.len()
        )));
    }
    let next_iteration = state.iteration + 1;
    for doc in &retrieved {
        if doc.iteration != next_iteration {
            return Err(StateError::Contract(format!(
                "doc {} tagged iteration {} but the step is {}",
                doc.source_id, doc.iteration, next_iteration
            )));
        }
        doc.check()?;
    }

    let mut evidence = state.evidence.clone();
    let mut keys: HashSet<(DocKind, String)> = evidence
        .iter()
        .map(|d| (d.kind, d.source_id.clone()))
        .collect();
    for doc in retrieved {
        let (kind, id) = doc.key();
        if keys.insert((kind, id.to_owned())) {
            evidence.push(doc);
        }
    }

    let mut history = state.history.clone();
    let current_queries = decision.query_set.clone();
    history.push(decision);

    Ok(PlanState {
        iteration: next_iteration,
        current_queries,
        evidence,
        history,
        origin: state.origin.clone(),
    })
}

pub fn is_terminal(state: &PlanState, t_max: usize) -> bool {
    state.last_action() == Some(RetrievalAction::NoSearch) || state.iteration >= t_max
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    NoSearch,
    IterationCap,
    Failed,
}

/// One recorded planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(flatten)]
    pub decision: PlanDecision,
    pub retrieved: Vec<RetrievedDoc>,
    pub expert_tokens: u64,
    pub expert_latency_ms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// The full record of one query's decision chain and its answer.
///
/// Serialized one per line in trace files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTrace {
    pub sample_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub steps: Vec<TraceStep>,
    pub final_answer: String,
    pub terminated_by: Termination,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PlanTrace {
    pub fn failed(&self) -> bool {
        self.terminated_by == Termination::Failed
    }

    /// Steps whose action actually retrieved (anything other than NO_SEARCH).
    pub fn retrieval_steps(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.decision.action != RetrievalAction::NoSearch)
            .count()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serialization is infallible")
    }
}
