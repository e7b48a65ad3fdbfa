//! Answer and reformulation scoring.

mod claims;
mod metrics;
mod report;

use thiserror::Error;

pub use claims::{
    claim_precision_recall, Claim, ClaimExtractor, ClaimMatcher, ExactMatcher, ExpertExtractor, ExpertMatcher,
    SentenceExtractor,
};
pub use metrics::{bleu, rouge_l, token_f1, tokenize};
pub use report::{
    action_distribution, build_report, compare, ActionDistribution, BucketSummary, Efficiency, Means, MetricReport,
    MetricsConfig, QualityScores, ReformulationSummary, SampleMetrics,
};

use crate::expert::ExpertError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("traces name samples missing from the dataset: {}", .0.join(", "))]
    UnknownSamples(Vec<String>),
    #[error("claim matcher: {0}")]
    Matcher(String),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error("trace failed: {0}")]
    FailedTrace(String),
}
