//! Claim-level precision and recall.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::expert::parse::{parse_list, parse_verdict};
use crate::expert::{ExpertBackend, ExpertRequest, ExpertRole, PromptSet, RequestMeta};

/// A normalized single-fact assertion: lowercased, whitespace-collapsed,
/// without terminal punctuation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Claim(String);

impl Claim {
    /// `None` when nothing is left after normalization.
    pub fn new(text: &str) -> Option<Claim> {
        let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let trimmed = collapsed
            .trim_end_matches(|c: char| c.is_ascii_punctuation() && !matches!(c, ')' | ']' | '"' | '%'))
            .trim();
        (!trimmed.is_empty()).then(|| Claim(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Claim {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Claim::new(&value).ok_or_else(|| "empty claim".to_string())
    }
}

impl From<Claim> for String {
    fn from(c: Claim) -> String {
        c.0
    }
}

pub trait ClaimExtractor: Send + Sync {
    fn extract(&self, answer: &str) -> Result<Vec<Claim>, EvalError>;
}

pub trait ClaimMatcher: Send + Sync {
    /// Whether `candidate` states the fact in `reference`.
    fn matches(&self, candidate: &Claim, reference: &Claim) -> Result<bool, EvalError>;
}

fn dedup(claims: impl IntoIterator<Item = Claim>) -> Vec<Claim> {
    let mut out: Vec<Claim> = Vec::new();
    for c in claims {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// One claim per sentence; sentences end at `.`, `!` or `?` followed by
/// whitespace. Repeated claims are kept once.
#[derive(Debug, Clone, Copy, Default)]
pub struct SentenceExtractor;

impl SentenceExtractor {
    pub fn split(answer: &str) -> Vec<Claim> {
        let mut sentences = Vec::new();
        let mut start = 0;
        let mut chars = answer.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if matches!(c, '.' | '!' | '?') {
                if let Some(&(j, next)) = chars.peek() {
                    if next.is_whitespace() {
                        sentences.push(&answer[start..=i]);
                        start = j;
                    }
                }
            }
        }
        sentences.push(&answer[start..]);
        dedup(sentences.into_iter().filter_map(Claim::new))
    }
}

impl ClaimExtractor for SentenceExtractor {
    fn extract(&self, answer: &str) -> Result<Vec<Claim>, EvalError> {
        Ok(Self::split(answer))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatcher;

impl ClaimMatcher for ExactMatcher {
    fn matches(&self, candidate: &Claim, reference: &Claim) -> Result<bool, EvalError> {
        Ok(candidate == reference)
    }
}

/// Claim extraction by prompting an expert.
pub struct ExpertExtractor<'a> {
    pub backend: &'a dyn ExpertBackend,
    pub prompts: &'a PromptSet,
}

impl ClaimExtractor for ExpertExtractor<'_> {
    fn extract(&self, answer: &str) -> Result<Vec<Claim>, EvalError> {
        if answer.trim().is_empty() {
            return Ok(vec![]);
        }
        let (system, user) = self.prompts.extract_claims.render(&[("answer", answer)]);
        let meta = RequestMeta {
            role: Some(ExpertRole::ExtractClaims),
            ..RequestMeta::default()
        };
        let request = ExpertRequest::new(system, user, vec![], meta)?;
        let response = self.backend.complete(&request)?;
        match parse_list(&response.text) {
            Ok(items) => Ok(dedup(items.iter().filter_map(|s| Claim::new(s)))),
            // a reply that is not a list is treated as a single claim
            Err(_) => Ok(Claim::new(&response.text).into_iter().collect()),
        }
    }
}

/// Entailment judged by an expert; exact matches short-circuit.
pub struct ExpertMatcher<'a> {
    pub backend: &'a dyn ExpertBackend,
    pub prompts: &'a PromptSet,
}

impl ClaimMatcher for ExpertMatcher<'_> {
    fn matches(&self, candidate: &Claim, reference: &Claim) -> Result<bool, EvalError> {
        if candidate == reference {
            return Ok(true);
        }
        let (system, user) = self.prompts.judge_claim.render(&[
            ("reference", reference.as_str()),
            ("candidate", candidate.as_str()),
        ]);
        let meta = RequestMeta {
            role: Some(ExpertRole::JudgeClaim),
            ..RequestMeta::default()
        };
        let request = ExpertRequest::new(system, user, vec![], meta)?;
        for _ in 0..2 {
            let response = self.backend.complete(&request)?;
            if let Ok(verdict) = parse_verdict(&response.text) {
                return Ok(verdict);
            }
        }
        Err(EvalError::Matcher(format!(
            "no verdict for claim {candidate:?} against {reference:?}"
        )))
    }
}

/// (precision, recall) of `pred` against `gold`.
///
/// Both empty scores (1, 1). An empty prediction otherwise has precision 0;
/// an empty gold set gives recall 0 to any non-empty prediction.
pub fn claim_precision_recall(
    pred: &[Claim],
    gold: &[Claim],
    matcher: &dyn ClaimMatcher,
) -> Result<(f64, f64), EvalError> {
    if pred.is_empty() && gold.is_empty() {
        return Ok((1.0, 1.0));
    }
    let mut matrix = vec![vec![false; gold.len()]; pred.len()];
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gold.iter().enumerate() {
            matrix[i][j] = matcher.matches(p, g)?;
        }
    }
    let pred_hit = matrix.iter().filter(|row| row.iter().any(|&m| m)).count();
    let gold_hit = (0..gold.len()).filter(|&j| matrix.iter().any(|row| row[j])).count();
    let precision = if pred.is_empty() { 0.0 } else { pred_hit as f64 / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { gold_hit as f64 / gold.len() as f64 };
    Ok((precision, recall))
}
