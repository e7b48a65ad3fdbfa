use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{numbered, ExpertBackend, ExpertError, ExpertRequest, ExpertResponse, ExpertRole};
use crate::state::{PlanTrace, RetrievalAction};
use crate::tokens;

/// One scripted planning decision, keyed by the iteration it is taken at
/// (0 for the first decision).
///
/// A missing `reformulation` keeps the incoming queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reformulation: Option<Vec<String>>,
    pub action: RetrievalAction,
}

/// Script file contents: `{"steps": [...], "answer": "...", "unassisted_answer"?: "..."}`.
///
/// `unassisted_answer`, when present, is given instead of `answer` whenever
/// generation has no retrieved evidence to go on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unassisted_answer: Option<String>,
}

impl Script {
    pub fn validate(&self) -> Result<(), ExpertError> {
        if self.answer.trim().is_empty() || self.unassisted_answer.as_ref().is_some_and(|a| a.trim().is_empty()) {
            return Err(ExpertError::Config("script answer is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for step in &self.steps {
            if !seen.insert(step.iteration) {
                return Err(ExpertError::Config(format!(
                    "iteration {} scripted twice",
                    step.iteration
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(raw: &str) -> Result<Self, ExpertError> {
        let script: Script =
            serde_json::from_str(raw).map_err(|e| ExpertError::Config(format!("bad script: {e}")))?;
        script.validate()?;
        Ok(script)
    }

    /// A script that replays the decisions and answer recorded in `trace`.
    pub fn from_trace(trace: &PlanTrace) -> Script {
        Script {
            steps: trace
                .steps
                .iter()
                .enumerate()
                .map(|(i, step)| ScriptStep {
                    iteration: i,
                    reformulation: Some(step.decision.query_set.as_slice().to_vec()),
                    action: step.decision.action,
                })
                .collect(),
            answer: trace.final_answer.clone(),
            unassisted_answer: None,
        }
    }

    fn step(&self, iteration: usize) -> Option<&ScriptStep> {
        self.steps.iter().find(|s| s.iteration == iteration)
    }
}

/// Replays fixed decisions. Answers depend only on (sample, iteration, role)
/// so concurrent callers always see the same replies.
///
/// Unscripted iterations keep the queries and answer NO_SEARCH.
#[derive(Debug, Clone, Default)]
pub struct ScriptedExpert {
    default: Option<Script>,
    by_sample: BTreeMap<String, Script>,
}

impl ScriptedExpert {
    pub fn new(script: Script) -> Self {
        ScriptedExpert {
            default: Some(script),
            by_sample: BTreeMap::new(),
        }
    }

    pub fn with_sample(mut self, sample_id: impl Into<String>, script: Script) -> Self {
        self.by_sample.insert(sample_id.into(), script);
        self
    }

    /// Loads a single script file (used for every sample) or a directory of
    /// `<sample_id>.json` files, where `default.json` covers the rest.
    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let read = |p: &Path| {
            fs::read_to_string(p)
                .map_err(|e| ExpertError::Config(format!("{}: {e}", p.display())))
                .and_then(|raw| {
                    Script::from_json(&raw)
                        .map_err(|e| ExpertError::Config(format!("{}: {e}", p.display())))
                })
        };
        if path.is_dir() {
            let mut expert = ScriptedExpert::default();
            let mut entries: Vec<_> = fs::read_dir(path)
                .map_err(|e| ExpertError::Config(format!("{}: {e}", path.display())))?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            for file in entries {
                let stem = file
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let script = read(&file)?;
                if stem == "default" {
                    expert.default = Some(script);
                } else {
                    expert.by_sample.insert(stem, script);
                }
            }
            Ok(expert)
        } else {
            Ok(ScriptedExpert::new(read(path)?))
        }
    }

    fn script_for(&self, sample_id: &str) -> Result<&Script, ExpertError> {
        self.by_sample
            .get(sample_id)
            .or(self.default.as_ref())
            .ok_or_else(|| ExpertError::Config(format!("no script for sample {sample_id:?}")))
    }
}

impl ExpertBackend for ScriptedExpert {
    fn complete(&self, request: &ExpertRequest) -> Result<ExpertResponse, ExpertError> {
        let meta = &request.meta;
        let script = self.script_for(&meta.sample_id)?;
        let step = script.step(meta.iteration);
        let text = match meta.role {
            Some(ExpertRole::Reformulate) => match step.and_then(|s| s.reformulation.as_ref()) {
                Some(queries) => numbered(queries),
                None => numbered(&meta.queries),
            },
            Some(ExpertRole::SelectAction) => {
                let action = step.map_or(RetrievalAction::NoSearch, |s| s.action);
                format!("Action: {action}")
            }
            Some(ExpertRole::Generate) => match &script.unassisted_answer {
                Some(answer) if meta.evidence_docs == 0 => answer.clone(),
                _ => script.answer.clone(),
            },
            other => {
                return Err(ExpertError::Config(format!(
                    "scripted expert cannot serve role {other:?}"
                )))
            }
        };
        Ok(ExpertResponse {
            prompt_tokens: request.prompt_tokens(),
            completion_tokens: tokens::count(&text) as u64,
            text,
            latency_ms: 0.0,
        })
    }
}
