//! Benchmark samples: JSONL loading, validation and summary statistics.
//!
//! One JSON object per line:
//! `{"id", "query": {"text", "image"?}, "hop_count", "answer_type", "domain",
//!   "golden_answer", "golden_trace"?: {"steps": [{"action", "queries", "docs"}]}}`.
//! Image paths are relative to the dataset file's directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::state::{ImageRef, MultimodalQuery, RetrievalAction};
use crate::tokens;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {field}: {reason}")]
    Schema {
        line: usize,
        field: String,
        reason: String,
    },
    #[error("line {line}: duplicate id {id:?} (first seen on line {first})")]
    DuplicateId { id: String, line: usize, first: usize },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnswerType {
    OpenEnded,
    CloseEnded,
}

impl AnswerType {
    pub fn label(self) -> &'static str {
        match self {
            AnswerType::OpenEnded => "open-ended",
            AnswerType::CloseEnded => "close-ended",
        }
    }
}

/// Reasoning-step buckets used in every table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HopBucket {
    #[serde(rename = "1-hop")]
    One,
    #[serde(rename = "2-hop")]
    Two,
    #[serde(rename = ">2-hop")]
    More,
}

impl HopBucket {
    pub const ALL: [HopBucket; 3] = [HopBucket::One, HopBucket::Two, HopBucket::More];

    pub fn of(hops: u32) -> HopBucket {
        match hops {
            0 | 1 => HopBucket::One,
            2 => HopBucket::Two,
            _ => HopBucket::More,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HopBucket::One => "1-hop",
            HopBucket::Two => "2-hop",
            HopBucket::More => ">2-hop",
        }
    }
}

impl fmt::Display for HopBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenStep {
    pub action: RetrievalAction,
    #[serde(default)]
    pub queries: Vec<String>,
    #[serde(default)]
    pub docs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenTrace {
    pub steps: Vec<GoldenStep>,
}

impl GoldenTrace {
    /// All reformulated queries of the chain, in order.
    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| s.queries.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSample {
    pub id: String,
    pub query: MultimodalQuery,
    pub hop_count: u32,
    pub answer_type: AnswerType,
    pub domain: String,
    pub golden_answer: String,
    pub golden_trace: Option<GoldenTrace>,
}

impl BenchSample {
    pub fn bucket(&self) -> HopBucket {
        HopBucket::of(self.hop_count)
    }
}

struct Line<'a> {
    number: usize,
    obj: &'a Map<String, Value>,
}

impl<'a> Line<'a> {
    fn err(&self, field: &str, reason: impl Into<String>) -> DatasetError {
        DatasetError::Schema {
            line: self.number,
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&'a Value, DatasetError> {
        self.obj.get(field).filter(|v| !v.is_null()).ok_or_else(|| self.err(field, "missing"))
    }

    fn string(&self, field: &str) -> Result<String, DatasetError> {
        match self.get(field)? {
            Value::String(s) if !s.trim().is_empty() => Ok(s.clone()),
            Value::String(_) => Err(self.err(field, "must not be empty")),
            _ => Err(self.err(field, "must be a string")),
        }
    }
}

fn parse_line(number: usize, raw: &str, root: &Path) -> Result<BenchSample, DatasetError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Schema {
        line: number,
        field: "json".into(),
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| DatasetError::Schema {
        line: number,
        field: "json".into(),
        reason: "not an object".into(),
    })?;
    let line = Line { number, obj };

    let id = line.string("id")?;
    let query = line.get("query")?.as_object().ok_or_else(|| line.err("query", "must be an object"))?;
    let text = match query.get("text") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(line.err("query.text", "must not be empty")),
        _ => return Err(line.err("query.text", "missing")),
    };
    let image = match query.get("image") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => {
            let image = ImageRef::parse(s.clone())
                .map_err(|e| line.err("query.image", e.to_string()))?
                .resolve_against(root);
            image.check_readable().map_err(|e| line.err("query.image", e.to_string()))?;
            Some(image)
        }
        Some(_) => return Err(line.err("query.image", "must be a string")),
    };
    let hop_count = match line.get("hop_count")?.as_u64() {
        Some(h) if h >= 1 && h <= u32::MAX as u64 => h as u32,
        _ => return Err(line.err("hop_count", "must be a positive integer")),
    };
    let answer_type = serde_json::from_value(line.get("answer_type")?.clone())
        .map_err(|_| line.err("answer_type", "must be \"open-ended\" or \"close-ended\""))?;
    let domain = line.string("domain")?;
    let golden_answer = line.string("golden_answer")?;
    let golden_trace = match obj.get("golden_trace") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value(v.clone()).map_err(|e| line.err("golden_trace", e.to_string()))?,
        ),
    };
    Ok(BenchSample {
        query: MultimodalQuery::new(id.clone(), text, image),
        id,
        hop_count,
        answer_type,
        domain,
        golden_answer,
        golden_trace,
    })
}

/// Parses JSONL text; blank lines are skipped but still counted.
pub fn parse_dataset(text: &str, root: &Path) -> Result<Vec<BenchSample>, DatasetError> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let number = i + 1;
        let sample = parse_line(number, raw, root)?;
        if let Some(&first) = seen.get(&sample.id) {
            return Err(DatasetError::DuplicateId { id: sample.id, line: number, first });
        }
        seen.insert(sample.id.clone(), number);
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<BenchSample>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root = path.parent().unwrap_or(Path::new("."));
    parse_dataset(&text, root)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_queries: usize,
    pub n_domains: usize,
    pub mean_query_len: f64,
    pub mean_answer_len: f64,
    pub n_images: usize,
    pub hop_histogram: BTreeMap<HopBucket, Share>,
    pub answer_types: BTreeMap<AnswerType, Share>,
}

fn shares<K: Ord + Copy>(keys: &[K], items: impl Iterator<Item = K>) -> BTreeMap<K, Share> {
    let mut counts: BTreeMap<K, usize> = keys.iter().map(|&k| (k, 0)).collect();
    let mut total = 0;
    for k in items {
        *counts.entry(k).or_insert(0) += 1;
        total += 1;
    }
    counts
        .into_iter()
        .map(|(k, count)| (k, Share { count, fraction: count as f64 / total as f64 }))
        .collect()
}

pub fn dataset_stats(samples: &[BenchSample]) -> Result<DatasetStats, DatasetError> {
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let n = samples.len() as f64;
    let domains: BTreeSet<&str> = samples.iter().map(|s| s.domain.as_str()).collect();
    Ok(DatasetStats {
        n_queries: samples.len(),
        n_domains: domains.len(),
        mean_query_len: samples.iter().map(|s| tokens::count(&s.query.text)).sum::<usize>() as f64 / n,
        mean_answer_len: samples.iter().map(|s| tokens::count(&s.golden_answer)).sum::<usize>() as f64 / n,
        n_images: samples.iter().filter(|s| s.query.image.is_some()).count(),
        hop_histogram: shares(&HopBucket::ALL, samples.iter().map(BenchSample::bucket)),
        answer_types: shares(
            &[AnswerType::OpenEnded, AnswerType::CloseEnded],
            samples.iter().map(|s| s.answer_type),
        ),
    })
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |s: &Share| format!("{:>6.2}%", s.fraction * 100.0);
        writeln!(f, "{:<22}{}", "queries", self.n_queries)?;
        writeln!(f, "{:<22}{}", "domains", self.n_domains)?;
        writeln!(f, "{:<22}{}", "images", self.n_images)?;
        writeln!(f, "{:<22}{:.2}", "mean query length", self.mean_query_len)?;
        writeln!(f, "{:<22}{:.2}", "mean answer length", self.mean_answer_len)?;
        for (bucket, share) in &self.hop_histogram {
            writeln!(f, "{:<22}{:>5}  {}", bucket.label(), share.count, pct(share))?;
        }
        for (kind, share) in &self.answer_types {
            writeln!(f, "{:<22}{:>5}  {}", kind.label(), share.count, pct(share))?;
        }
        Ok(())
    }
}
