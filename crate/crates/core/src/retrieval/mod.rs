//! Retrieval action execution: search backends, content clean-up,
//! truncation and caching.

mod cache;
mod corpus;
mod preprocess;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{normalize_query, CacheKey, CacheStats, CachedSearch, DEFAULT_CACHE_CAPACITY};
pub use corpus::{simulator_rank, tokenize_terms, LocalCorpus};
pub use preprocess::preprocess_content;
pub use remote::{RemoteSearch, RemoteSearchConfig};

/// Environment variable names read by the remote backend.
pub mod remote_env {
    pub use super::remote::{ENV_KEY as KEY, ENV_URL as URL};
}

use crate::state::{ImageRef, RetrievedDoc};
use crate::tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("search transport error: {0}")]
    Transport(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("search backend not configured: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Text,
    Image,
}

/// One raw search result before clean-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHit {
    pub source_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default)]
    pub score: f64,
}

/// Text and image search.
///
/// Results come back best first and never exceed the requested count.
/// Implementations must tolerate concurrent calls.
pub trait SearchBackend: Send + Sync {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError>;
    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError>;
}

impl<T: SearchBackend + ?Sized> SearchBackend for std::sync::Arc<T> {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        (**self).text_search(query, k)
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        (**self).image_search(image, query, max)
    }
}

impl<T: SearchBackend + ?Sized> SearchBackend for &T {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        (**self).text_search(query, k)
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        (**self).image_search(image, query, max)
    }
}

/// Backend for pipelines that never search; every call fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoSearchBackend;

impl SearchBackend for NoSearchBackend {
    fn text_search(&self, _query: &str, _k: usize) -> Result<Vec<RawHit>, SearchError> {
        Err(SearchError::Unavailable("no search backend configured".into()))
    }

    fn image_search(&self, _image: &ImageRef, _query: &str, _max: usize) -> Result<Vec<RawHit>, SearchError> {
        Err(SearchError::Unavailable("no search backend configured".into()))
    }
}

/// Post-processing applied to every raw hit before clean-up, e.g. removing
/// page chrome from screenshots.
pub trait ContentHook: Send + Sync {
    fn process(&self, hit: RawHit) -> RawHit;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopHook;

impl ContentHook for NoopHook {
    fn process(&self, hit: RawHit) -> RawHit {
        hit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalLimits {
    pub text_top_k: usize,
    pub text_token_cap: usize,
    pub image_min: usize,
    pub image_max: usize,
}

impl Default for RetrievalLimits {
    fn default() -> Self {
        RetrievalLimits {
            text_top_k: 5,
            text_token_cap: 800,
            image_min: 3,
            image_max: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRetrieval {
    pub docs: Vec<RetrievedDoc>,
    /// Fewer than `image_min` usable candidates existed.
    pub below_minimum: bool,
}

/// Runs searches under fixed limits and turns hits into evidence.
#[derive(Clone, Copy)]
pub struct Retriever<'a> {
    pub backend: &'a dyn SearchBackend,
    pub limits: RetrievalLimits,
    pub hook: &'a dyn ContentHook,
}

impl<'a> Retriever<'a> {
    pub fn new(backend: &'a dyn SearchBackend, limits: RetrievalLimits) -> Self {
        Retriever {
            backend,
            limits,
            hook: &NoopHook,
        }
    }

    /// Top `text_top_k` text results, cleaned and cut to `text_token_cap`
    /// whitespace tokens, tagged with `query` and `iteration`.
    pub fn text(&self, query: &str, iteration: usize) -> Result<Vec<RetrievedDoc>, SearchError> {
        let k = self.limits.text_top_k;
        let hits = self.backend.text_search(query, k)?;
        Ok(hits
            .into_iter()
            .take(k)
            .map(|hit| {
                let hit = self.hook.process(hit);
                let clean = preprocess_content(&hit.body);
                let (content, _) = tokens::truncate(&clean, self.limits.text_token_cap);
                RetrievedDoc::text(hit.source_id, content, iteration, query)
            })
            .collect())
    }

    /// Up to `image_max` captioned image candidates.
    pub fn image(&self, image: &ImageRef, query: &str, iteration: usize) -> Result<ImageRetrieval, SearchError> {
        let max = self.limits.image_max;
        let hits = self.backend.image_search(image, query, max)?;
        let docs: Vec<RetrievedDoc> = hits
            .into_iter()
            .map(|hit| self.hook.process(hit))
            .filter_map(|hit| {
                let caption = preprocess_content(hit.caption.as_deref().unwrap_or_default());
                match (hit.image, caption.is_empty()) {
                    (Some(img), false) => Some(RetrievedDoc::image(hit.source_id, caption, img, iteration, query)),
                    _ => None,
                }
            })
            .take(max)
            .collect();
        Ok(ImageRetrieval {
            below_minimum: docs.len() < self.limits.image_min,
            docs,
        })
    }
}

pub fn text_retrieve(
    backend: &dyn SearchBackend,
    query: &str,
    iteration: usize,
    limits: RetrievalLimits,
) -> Result<Vec<RetrievedDoc>, SearchError> {
    Retriever::new(backend, limits).text(query, iteration)
}

pub fn image_retrieve(
    backend: &dyn SearchBackend,
    image: &ImageRef,
    query: &str,
    iteration: usize,
    limits: RetrievalLimits,
) -> Result<ImageRetrieval, SearchError> {
    Retriever::new(backend, limits).image(image, query, iteration)
}
