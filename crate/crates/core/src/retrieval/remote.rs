//! HTTP search client.
//!
//! Contract: `GET <url>?q=<query>&k=<count>&mode=text|image[&image=<locator>]`
//! with an optional bearer token, answering
//! `{"results": [{"source_id" | "url", "title", "body" | "snippet", "image", "caption", "score"}]}`.
//! Local image paths are sent inline as `data:` URIs.

use std::time::Duration;

use serde::Deserialize;

use super::{RawHit, SearchBackend, SearchError, SearchMode};
use crate::state::{ImageRef, MediaKind};

pub const ENV_URL: &str = "COGPLAN_SEARCH_URL";
pub const ENV_KEY: &str = "COGPLAN_SEARCH_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSearchConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

impl RemoteSearchConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteSearchConfig {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|u| !u.is_empty())?;
        let mut config = RemoteSearchConfig::new(url);
        config.api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Some(config)
    }
}

#[derive(Debug, Deserialize)]
struct Response {
    #[serde(default)]
    results: Vec<WireHit>,
}

#[derive(Debug, Deserialize)]
struct WireHit {
    #[serde(alias = "url", alias = "id")]
    source_id: String,
    #[serde(default)]
    title: String,
    #[serde(default, alias = "snippet", alias = "content")]
    body: String,
    #[serde(default)]
    image: Option<String>,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    score: f64,
}

pub struct RemoteSearch {
    config: RemoteSearchConfig,
    client: reqwest::blocking::Client,
}

impl RemoteSearch {
    pub fn new(config: RemoteSearchConfig) -> Result<Self, SearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| SearchError::Unavailable(format!("http client: {e}")))?;
        Ok(RemoteSearch { config, client })
    }

    fn fetch(&self, mode: SearchMode, query: &str, count: usize, image: Option<&ImageRef>) -> Result<Vec<RawHit>, SearchError> {
        let mode_name = match mode {
            SearchMode::Text => "text",
            SearchMode::Image => "image",
        };
        let mut params = vec![
            ("q", query.to_string()),
            ("k", count.to_string()),
            ("mode", mode_name.to_string()),
        ];
        if let Some(image) = image {
            let locator = match image.media_kind() {
                MediaKind::Path => crate::expert::inline_image_url(image)
                    .map_err(|e| SearchError::Transport(e.to_string()))?,
                _ => image.locator().to_string(),
            };
            params.push(("image", locator));
        }
        let url = url::Url::parse_with_params(&self.config.url, &params)
            .map_err(|e| SearchError::Unavailable(format!("bad search url: {e}")))?;
        let mut req = self.client.get(url);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| SearchError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| SearchError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(SearchError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: Response =
            serde_json::from_str(&text).map_err(|e| SearchError::Transport(format!("bad response: {e}")))?;
        let mut hits = Vec::new();
        for wire in parsed.results.into_iter().take(count) {
            let image = match wire.image {
                Some(locator) => Some(ImageRef::parse(locator).map_err(|e| SearchError::Transport(e.to_string()))?),
                None => None,
            };
            if wire.source_id.trim().is_empty() {
                continue;
            }
            hits.push(RawHit {
                source_id: wire.source_id,
                title: wire.title,
                body: wire.body,
                image,
                caption: wire.caption,
                score: wire.score,
            });
        }
        // keep backend relevance order stable even if the service does not sort
        hits.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
        Ok(hits)
    }
}

impl SearchBackend for RemoteSearch {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        self.fetch(SearchMode::Text, query, k, None)
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        self.fetch(SearchMode::Image, query, max, Some(image))
    }
}
