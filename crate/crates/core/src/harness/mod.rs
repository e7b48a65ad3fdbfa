//! Datasets, baseline pipelines, configuration and the command line.

pub mod cli;
mod config;
mod dataset;
mod pipeline;

use std::path::Path;

use thiserror::Error;

pub use config::{ModelSettings, Runtime, SearchSettings, Settings};
pub use dataset::{
    dataset_stats, load_dataset, parse_dataset, AnswerType, BenchSample, DatasetError, DatasetStats, GoldenStep,
    GoldenTrace, HopBucket, Share,
};
pub use pipeline::{adhoc_sample, run_pipeline, run_sample, PipelineMode, FLAG_IMAGE_FALLBACK};

use crate::evalkit::EvalError;
use crate::state::PlanTrace;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) | HarnessError::Dataset(_) => 1,
            HarnessError::Eval(EvalError::UnknownSamples(_)) => 1,
            HarnessError::Backend(_) | HarnessError::Eval(_) => 2,
        }
    }
}

/// Reads a JSONL trace file.
pub fn read_traces(path: &Path) -> Result<Vec<PlanTrace>, HarnessError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| HarnessError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
