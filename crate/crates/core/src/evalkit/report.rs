//! Per-sample scoring and aggregate reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::claims::{claim_precision_recall, ClaimExtractor, ClaimMatcher};
use super::metrics::{bleu, rouge_l, token_f1};
use super::EvalError;
use crate::harness::{AnswerType, BenchSample, HopBucket};
use crate::state::{PlanTrace, RetrievalAction};

pub struct MetricsConfig<'a> {
    pub extractor: &'a dyn ClaimExtractor,
    pub matcher: &'a dyn ClaimMatcher,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub precision: f64,
    pub recall: f64,
    pub token_f1: f64,
    pub hop_bucket: HopBucket,
    pub answer_type: AnswerType,
    pub expert_tokens: u64,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reformulation: Option<QualityScores>,
}

/// Reformulated queries against the golden chain's queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScores {
    pub bleu: f64,
    pub rouge_l: f64,
    pub token_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Means {
    pub precision: f64,
    pub recall: f64,
    pub token_f1: f64,
    #[serde(default)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BucketSummary {
    pub n: usize,
    /// Share of the evaluated samples in this bucket.
    pub fraction: f64,
    /// `None` when the bucket is empty.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub token_f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ActionDistribution {
    pub no: f64,
    pub text: f64,
    pub image: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Efficiency {
    pub mean_expert_tokens: f64,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReformulationSummary {
    pub n: usize,
    pub bleu: f64,
    pub rouge_l: f64,
    pub token_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default)]
    pub label: String,
    pub overall: Means,
    pub buckets: BTreeMap<HopBucket, BucketSummary>,
    #[serde(default)]
    pub action_distribution: ActionDistribution,
    #[serde(default)]
    pub efficiency: Efficiency,
    #[serde(default)]
    pub excluded: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reformulation: Option<ReformulationSummary>,
    #[serde(default)]
    pub samples: Vec<SampleMetrics>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn reformulation_scores(trace: &PlanTrace, sample: &BenchSample) -> Option<QualityScores> {
    let golden = sample.golden_trace.as_ref()?;
    let reference = golden.queries().collect::<Vec<_>>().join(" ");
    if reference.trim().is_empty() {
        return None;
    }
    let produced = trace
        .steps
        .iter()
        .flat_map(|s| s.decision.query_set.iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join(" ");
    Some(QualityScores {
        bleu: bleu(&produced, &[&reference]),
        rouge_l: rouge_l(&produced, &reference),
        token_f1: token_f1(&produced, &reference),
    })
}

fn score(trace: &PlanTrace, sample: &BenchSample, cfg: &MetricsConfig<'_>) -> Result<SampleMetrics, EvalError> {
    let pred = cfg.extractor.extract(&trace.final_answer)?;
    let gold = cfg.extractor.extract(&sample.golden_answer)?;
    let (precision, recall) = claim_precision_recall(&pred, &gold, cfg.matcher)?;
    Ok(SampleMetrics {
        sample_id: sample.id.clone(),
        precision,
        recall,
        token_f1: token_f1(&trace.final_answer, &sample.golden_answer),
        hop_bucket: sample.bucket(),
        answer_type: sample.answer_type,
        expert_tokens: trace.steps.iter().map(|s| s.expert_tokens).sum(),
        latency_ms: trace.steps.iter().map(|s| s.expert_latency_ms).sum(),
        reformulation: reformulation_scores(trace, sample),
    })
}

/// Fraction of trace steps taking each action.
pub fn action_distribution<'a>(traces: impl IntoIterator<Item = &'a PlanTrace>) -> ActionDistribution {
    let mut counts = [0usize; 3];
    for step in traces.into_iter().flat_map(|t| &t.steps) {
        counts[match step.decision.action {
            RetrievalAction::NoSearch => 0,
            RetrievalAction::TextSearch => 1,
            RetrievalAction::ImageSearch => 2,
        }] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return ActionDistribution::default();
    }
    let f = |c: usize| c as f64 / total as f64;
    ActionDistribution { no: f(counts[0]), text: f(counts[1]), image: f(counts[2]) }
}

/// Scores `traces` against `dataset`.
///
/// Every trace must name a sample in the dataset. Failed traces and samples
/// whose claims cannot be judged are excluded and counted.
pub fn build_report(
    traces: &[PlanTrace],
    dataset: &[BenchSample],
    cfg: &MetricsConfig<'_>,
) -> Result<MetricReport, EvalError> {
    let by_id: HashMap<&str, &BenchSample> = dataset.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut unknown: Vec<String> = traces
        .iter()
        .filter(|t| !by_id.contains_key(t.sample_id.as_str()))
        .map(|t| t.sample_id.clone())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(EvalError::UnknownSamples(unknown));
    }

    let scored: Vec<(&PlanTrace, Result<SampleMetrics, EvalError>)> = traces
        .par_iter()
        .map(|t| {
            let result = if t.failed() {
                Err(EvalError::FailedTrace(t.error.clone().unwrap_or_default()))
            } else {
                score(t, by_id[t.sample_id.as_str()], cfg)
            };
            (t, result)
        })
        .collect();

    let mut samples = Vec::new();
    let mut kept = Vec::new();
    let mut excluded_ids = Vec::new();
    for (trace, result) in scored {
        match result {
            Ok(m) => {
                samples.push(m);
                kept.push(trace);
            }
            Err(e) => {
                tracing::warn!(sample = %trace.sample_id, error = %e, "sample excluded");
                excluded_ids.push(trace.sample_id.clone());
            }
        }
    }

    let overall = Means {
        precision: mean(samples.iter().map(|s| s.precision)).unwrap_or(0.0),
        recall: mean(samples.iter().map(|s| s.recall)).unwrap_or(0.0),
        token_f1: mean(samples.iter().map(|s| s.token_f1)).unwrap_or(0.0),
        n: samples.len(),
    };
    let buckets = HopBucket::ALL
        .iter()
        .map(|&b| {
            let members: Vec<&SampleMetrics> = samples.iter().filter(|s| s.hop_bucket == b).collect();
            let summary = BucketSummary {
                n: members.len(),
                fraction: if samples.is_empty() { 0.0 } else { members.len() as f64 / samples.len() as f64 },
                precision: mean(members.iter().map(|s| s.precision)),
                recall: mean(members.iter().map(|s| s.recall)),
                token_f1: mean(members.iter().map(|s| s.token_f1)),
            };
            (b, summary)
        })
        .collect();
    let efficiency = Efficiency {
        mean_expert_tokens: mean(samples.iter().map(|s| s.expert_tokens as f64)).unwrap_or(0.0),
        mean_latency_ms: mean(samples.iter().map(|s| s.latency_ms)).unwrap_or(0.0),
    };
    let quality: Vec<QualityScores> = samples.iter().filter_map(|s| s.reformulation).collect();
    let reformulation = (!quality.is_empty()).then(|| ReformulationSummary {
        n: quality.len(),
        bleu: mean(quality.iter().map(|q| q.bleu)).unwrap_or(0.0),
        rouge_l: mean(quality.iter().map(|q| q.rouge_l)).unwrap_or(0.0),
        token_f1: mean(quality.iter().map(|q| q.token_f1)).unwrap_or(0.0),
    });

    Ok(MetricReport {
        label: cfg.label.clone(),
        overall,
        buckets,
        action_distribution: action_distribution(kept),
        efficiency,
        excluded: excluded_ids.len(),
        excluded_ids,
        reformulation,
        samples,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "-".into())
}

impl MetricReport {
    /// Aligned plain-text summary.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        if !self.label.is_empty() {
            let _ = writeln!(out, "{}", self.label);
        }
        let _ = writeln!(out, "{:<10}{:>6}{:>9}{:>10}{:>10}{:>10}", "bucket", "n", "share", "precision", "recall", "f1");
        for (bucket, b) in &self.buckets {
            let _ = writeln!(
                out,
                "{:<10}{:>6}{:>8.2}%{:>10}{:>10}{:>10}",
                bucket.label(),
                b.n,
                b.fraction * 100.0,
                pct(b.precision),
                pct(b.recall),
                pct(b.token_f1)
            );
        }
        let o = &self.overall;
        let _ = writeln!(
            out,
            "{:<10}{:>6}{:>9}{:>10}{:>10}{:>10}",
            "overall",
            o.n,
            "",
            pct(Some(o.precision)),
            pct(Some(o.recall)),
            pct(Some(o.token_f1))
        );
        let a = &self.action_distribution;
        let _ = writeln!(
            out,
            "actions   no {:.2}%  text {:.2}%  image {:.2}%",
            a.no * 100.0,
            a.text * 100.0,
            a.image * 100.0
        );
        let _ = writeln!(
            out,
            "cost      {:.1} expert tokens, {:.1} ms per sample",
            self.efficiency.mean_expert_tokens, self.efficiency.mean_latency_ms
        );
        if let Some(r) = &self.reformulation {
            let _ = writeln!(
                out,
                "queries   bleu {:.2}  rouge-l {:.2}  f1 {:.2}  (n={})",
                r.bleu * 100.0,
                r.rouge_l * 100.0,
                r.token_f1 * 100.0,
                r.n
            );
        }
        let _ = writeln!(out, "excluded  {}", self.excluded);
        out
    }
}

/// Side-by-side table: one row per report, precision/recall/F1 for every
/// hop bucket and overall, followed by the action mix.
pub fn compare(reports: &[MetricReport]) -> String {
    let width = reports.iter().map(|r| r.label.chars().count()).max().unwrap_or(0).max(12) + 2;
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "");
    for group in HopBucket::ALL.iter().map(|b| b.label()).chain(["overall"]) {
        let _ = write!(out, "{:^24}", group);
    }
    let _ = writeln!(out, "{:^27}", "actions");
    let _ = write!(out, "{:<width$}", "method");
    for _ in 0..4 {
        let _ = write!(out, "{:>8}{:>8}{:>8}", "P", "R", "F1");
    }
    let _ = writeln!(out, "{:>9}{:>9}{:>9}", "no", "text", "image");
    for r in reports {
        let label = if r.label.is_empty() { "(unlabelled)" } else { r.label.as_str() };
        let _ = write!(out, "{label:<width$}");
        for bucket in HopBucket::ALL {
            let b = r.buckets.get(&bucket).copied().unwrap_or_default();
            let _ = write!(out, "{:>8}{:>8}{:>8}", pct(b.precision), pct(b.recall), pct(b.token_f1));
        }
        let o = r.overall;
        let _ = write!(out, "{:>8}{:>8}{:>8}", pct(Some(o.precision)), pct(Some(o.recall)), pct(Some(o.token_f1)));
        let a = r.action_distribution;
        let _ = writeln!(out, "{:>9}{:>9}{:>9}", pct(Some(a.no)), pct(Some(a.text)), pct(Some(a.image)));
    }
    out
}
