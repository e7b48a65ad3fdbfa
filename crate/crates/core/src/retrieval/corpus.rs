//! Local corpus that stands in for web text and image search.
//!
//! Layout: a directory with `corpus.json`
//! `{"docs": [{"id","title","file","tags"}], "images": [{"id","file","caption","tags"}]}`
//! where `file` paths are relative to the directory.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{RawHit, SearchBackend, SearchError};
use crate::state::{ImageRef, MediaKind};

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "how",
    "in", "is", "it", "its", "of", "on", "or", "that", "the", "this", "to", "was", "were", "what",
    "when", "where", "which", "who", "why", "with",
];

/// Lowercased alphanumeric terms of `text`, stopwords removed.
pub fn tokenize_terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn term_set(text: &str) -> HashSet<String> {
    tokenize_terms(text).into_iter().collect()
}

#[derive(Debug, Deserialize)]
struct Manifest {
    #[serde(default)]
    docs: Vec<DocEntry>,
    #[serde(default)]
    images: Vec<ImageEntry>,
}

#[derive(Debug, Deserialize)]
struct DocEntry {
    id: String,
    title: String,
    file: String,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ImageEntry {
    id: String,
    file: String,
    caption: String,
    #[serde(default)]
    tags: Vec<String>,
}

#[derive(Debug, Clone)]
struct CorpusDoc {
    id: String,
    title: String,
    body: String,
    title_terms: HashSet<String>,
    body_terms: HashSet<String>,
    tag_terms: HashSet<String>,
}

#[derive(Debug, Clone)]
struct CorpusImage {
    id: String,
    image: ImageRef,
    caption: String,
    caption_terms: HashSet<String>,
    tag_terms: HashSet<String>,
}

#[derive(Debug, Clone)]
pub struct LocalCorpus {
    root: PathBuf,
    docs: Vec<CorpusDoc>,
    images: Vec<CorpusImage>,
}

impl LocalCorpus {
    pub fn load(dir: &Path) -> Result<Self, SearchError> {
        let manifest_path = dir.join("corpus.json");
        let raw = fs::read_to_string(&manifest_path)
            .map_err(|e| SearchError::Corpus(format!("{}: {e}", manifest_path.display())))?;
        let manifest: Manifest = serde_json::from_str(&raw)
            .map_err(|e| SearchError::Corpus(format!("{}: {e}", manifest_path.display())))?;

        let mut ids = HashSet::new();
        let mut docs = Vec::with_capacity(manifest.docs.len());
        for entry in manifest.docs {
            if entry.id.trim().is_empty() || !ids.insert(entry.id.clone()) {
                return Err(SearchError::Corpus(format!("bad or duplicate doc id {:?}", entry.id)));
            }
            let path = dir.join(&entry.file);
            let body = fs::read_to_string(&path)
                .map_err(|e| SearchError::Corpus(format!("doc {}: {}: {e}", entry.id, path.display())))?;
            docs.push(CorpusDoc {
                title_terms: term_set(&entry.title),
                body_terms: term_set(&body),
                tag_terms: term_set(&entry.tags.join(" ")),
                id: entry.id,
                title: entry.title,
                body,
            });
        }

        let mut image_ids = HashSet::new();
        let mut images = Vec::with_capacity(manifest.images.len());
        for entry in manifest.images {
            if entry.id.trim().is_empty() || !image_ids.insert(entry.id.clone()) {
                return Err(SearchError::Corpus(format!("bad or duplicate image id {:?}", entry.id)));
            }
            if entry.caption.trim().is_empty() {
                return Err(SearchError::Corpus(format!("image {} has no caption", entry.id)));
            }
            let path = dir.join(&entry.file);
            if !path.is_file() {
                return Err(SearchError::Corpus(format!("image {}: missing {}", entry.id, path.display())));
            }
            let image = ImageRef::parse(path.to_string_lossy())
                .map_err(|e| SearchError::Corpus(format!("image {}: {e}", entry.id)))?;
            images.push(CorpusImage {
                caption_terms: term_set(&entry.caption),
                tag_terms: term_set(&entry.tags.join(" ")),
                id: entry.id,
                image,
                caption: entry.caption,
            });
        }

        Ok(LocalCorpus {
            root: dir.to_path_buf(),
            docs,
            images,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn image_count(&self) -> usize {
        self.images.len()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// Every distinct term in titles, bodies, tags and captions.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        let mut vocab = BTreeSet::new();
        for d in &self.docs {
            vocab.extend(d.title_terms.iter().cloned());
            vocab.extend(d.body_terms.iter().cloned());
            vocab.extend(d.tag_terms.iter().cloned());
        }
        for i in &self.images {
            vocab.extend(i.caption_terms.iter().cloned());
            vocab.extend(i.tag_terms.iter().cloned());
        }
        vocab
    }

    fn doc_score(doc: &CorpusDoc, terms: &BTreeSet<String>) -> u32 {
        terms
            .iter()
            .map(|t| {
                2 * u32::from(doc.title_terms.contains(t))
                    + u32::from(doc.body_terms.contains(t))
                    + u32::from(doc.tag_terms.contains(t))
            })
            .sum()
    }

    fn ranked_images(&self, image: &ImageRef, query: &str) -> Vec<&CorpusImage> {
        let mut terms: BTreeSet<String> = tokenize_terms(query).into_iter().collect();
        terms.extend(image_terms(image));
        let mut scored: Vec<(u32, &CorpusImage)> = self
            .images
            .iter()
            .map(|img| {
                let score = terms
                    .iter()
                    .map(|t| 2 * u32::from(img.tag_terms.contains(t)) + u32::from(img.caption_terms.contains(t)))
                    .sum();
                (score, img)
            })
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        scored.into_iter().map(|(_, img)| img).collect()
    }
}

/// Terms standing in for the visual content of a query image: the words of
/// its file name.
fn image_terms(image: &ImageRef) -> Vec<String> {
    match image.media_kind() {
        MediaKind::InlineBytes => Vec::new(),
        _ => {
            let name = image.locator().rsplit(['/', '\\']).next().unwrap_or_default();
            let stem = name.rsplit_once('.').map_or(name, |(stem, _)| stem);
            tokenize_terms(stem)
        }
    }
}

/// Ranks documents against `query`.
///
/// Each distinct query term scores 2 if it occurs in the title, plus 1 if in
/// the body, plus 1 if in the tags. Documents scoring zero are left out;
/// ties go to the lexicographically smaller id.
pub fn simulator_rank(corpus: &LocalCorpus, query: &str) -> Vec<String> {
    let terms: BTreeSet<String> = tokenize_terms(query).into_iter().collect();
    let mut scored: Vec<(u32, &str)> = corpus
        .docs
        .iter()
        .map(|d| (LocalCorpus::doc_score(d, &terms), d.id.as_str()))
        .filter(|(score, _)| *score > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.to_string()).collect()
}

impl SearchBackend for LocalCorpus {
    fn text_search(&self, query: &str, k: usize) -> Result<Vec<RawHit>, SearchError> {
        let terms: BTreeSet<String> = tokenize_terms(query).into_iter().collect();
        Ok(simulator_rank(self, query)
            .into_iter()
            .take(k)
            .filter_map(|id| self.docs.iter().find(|d| d.id == id))
            .map(|d| RawHit {
                source_id: d.id.clone(),
                title: d.title.clone(),
                body: d.body.clone(),
                image: None,
                caption: None,
                score: f64::from(LocalCorpus::doc_score(d, &terms)),
            })
            .collect())
    }

    fn image_search(&self, image: &ImageRef, query: &str, max: usize) -> Result<Vec<RawHit>, SearchError> {
        Ok(self
            .ranked_images(image, query)
            .into_iter()
            .take(max)
            .enumerate()
            .map(|(rank, img)| RawHit {
                source_id: img.id.clone(),
                title: img.caption.clone(),
                body: String::new(),
                image: Some(img.image.clone()),
                caption: Some(img.caption.clone()),
                score: 1.0 / (rank as f64 + 1.0),
            })
            .collect())
    }
}
