//! Memoizing wrapper for search backends.
//!
//! Entries live in an in-memory LRU and, optionally, in a directory of
//! content-addressed JSON files (`<sha256 of key>.json`). Disk problems are
//! logged and the cache falls back to calling the inner backend.

use std::collections::HashMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use lru::LruCache;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::warn;

use super::{RawHit, SearchBackend, SearchError, SearchMode};
use crate::state::ImageRef;

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

/// Lowercase, trim and collapse inner whitespace.
pub fn normalize_query(query: &str) -> String {
    query
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub mode: SearchMode,
    pub query: String,
    pub image: Option<String>,
    pub count: usize,
}

impl CacheKey {
    pub fn new(mode: SearchMode, query: &str, image: Option<&ImageRef>, count: usize) -> Self {
        CacheKey {
            mode,
            query: normalize_query(query),
            image: image.map(|i| i.locator().to_string()),
            count,
        }
    }

    pub fn digest(&self) -> String {
        let encoded = serde_json::to_vec(self).expect("cache key serializes");
        Sha256::digest(encoded)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DiskEntry {
    key: CacheKey,
    hits: Vec<RawHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheStats {
    pub memory_hits: u64,
    pub disk_hits: u64,
    pub misses: u64,
}

pub struct CachedSearch<B> {
    inner: B,
    memory: Mutex<LruCache<CacheKey, Vec<RawHit>>>,
    disk: Option<PathBuf>,
    inflight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    memory_hits: AtomicU64,
    disk_hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: SearchBackend> CachedSearch<B> {
    pub fn new(inner: B, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity.max(1)).expect("nonzero");
        CachedSearch {
            inner,
            memory: Mutex::new(LruCache::new(capacity)),
            disk: None,
            inflight: Mutex::new(HashMap::new()),
            memory_hits: AtomicU64::new(0),
            disk_hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// Persists entries under `dir`, creating it if needed. A directory that
    /// cannot be created leaves the cache memory-only.
    pub fn with_disk(mut self, dir: impl Into<PathBuf>) -> Self {
        let dir = dir.into();
        match fs::create_dir_all(&dir) {
            Ok(()) => self.disk = Some(dir),
            Err(e) => warn!(dir = %dir.display(), error = %e, "cache directory unusable, memory only"),
        }
        self
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            memory_hits: self.memory_hits.load(Ordering::Relaxed),
            disk_hits: self.disk_hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    fn memory_get(&self, key: &CacheKey) -> Option<Vec<RawHit>> {
        self.memory.lock().expect("cache lock").get(key).cloned()
    }

    fn remember(&self, key: CacheKey, hits: Vec<RawHit>) {
        self.memory.lock().expect("cache lock").put(key, hits);
    }

    fn disk_path(dir: &Path, key: &CacheKey) -> PathBuf {
        dir.join(format!("{}.json", key.digest()))
    }

    fn disk_get(&self, key: &CacheKey) -> Option<Vec<RawHit>> {
        let path = Self::disk_path(self.disk.as_ref()?, key);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "cache read failed");
                return None;
            }
        };
        match serde_json::from_slice::<DiskEntry>(&raw) {
            Ok(entry) if entry.key == *key => Some(entry.hits),
            Ok(_) => None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "corrupt cache entry ignored");
                None
            }
        }
    }

    fn to_disk(&self, key: &CacheKey, hits: &[RawHit]) {
        let Some(dir) = &self.disk else { return };
        let path = Self::disk_path(dir, key);
        let entry = DiskEntry {
            key: key.clone(),
            hits: hits.to_vec(),
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let written = serde_json::to_vec(&entry)
            .map_err(std::io::Error::other)
            .and_then(|bytes| fs::write(&tmp, bytes))
            .and_then(|()| fs::rename(&tmp, &path));
        if let Err(e) = written {
            warn!(path = %path.display(), error = %e, "cache write failed");
            let _ = fs::remove_file(&tmp);
        }
    }

    fn lookup(
        &self,
        key: CacheKey,
        fetch: impl FnOnce() -> Result<Vec<RawHit>, SearchError>,
    ) -> Result<Vec<RawHit>, SearchError> {
        if let Some(hits) = self.memory_get(&key) {
            self.memory_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hits);
        }
        // one fetch per key at a time; latecomers wait and then read the entry
        let gate = self
            .inflight
            .lock()
            .expect("cache lock")
            .entry(key.clone())
            .or_default()
            .clone();
        let _guard = gate.lock().expect("cache gate");
        let result = if let Some(hits) = self.memory_get(&key) {
            self.memory_hits.fetch_add(1, Ordering::Relaxed);
            Ok(hits)
        } else if let Some(hits) = self.disk_get(&key) {
            self.disk_hits.fetch_add(1, Ordering::Relaxed);
            self.remember(key.clone(), hits.clone());
            Ok(hits)
        } else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            fetch().inspect(|hits| {
                self.to_disk(&key, hits);
                self.remember(key.clone(), hits.clone());
            })
        };
        self.inflight.lock().expect("cache lock").remove(&key);
        result
    }
}

impl<B: SearchBackend> SearchBackend for CachedSearch<B> {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        let key = CacheKey::new(SearchMode::Text, query, None, k);
        self.lookup(key, || self.inner.text_search(query, k))
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        let key = CacheKey::new(SearchMode::Image, query, Some(image), max);
        self.lookup(key, || self.inner.image_search(image, query, max))
    }
}
