//! Settings from a TOML file, the environment and command-line overrides,
//! and the backends they describe.
//!
//! ```toml
//! prompts_dir = "prompts"          # optional template overrides
//!
//! [planner]                        # any PlannerConfig field
//! paradigm = "sequential"
//! t_max = 3
//!
//! [expert]
//! script = "experts/"              # scripted replay, or:
//! url = "https://api.example/v1"   # OpenAI-compatible endpoint
//! model = "gpt-4o"
//! timeout_secs = 120
//!
//! [generator]                      # optional, defaults to the expert
//! url = "..."
//! model = "..."
//!
//! [search]
//! corpus = "demo"                  # local corpus, or:
//! url = "https://search.example/api"
//! cache_dir = ".cache"
//! cache_capacity = 1024
//! ```
//!
//! Relative paths are resolved against the config file's directory.
//! `COGPLAN_EXPERT_URL`, `COGPLAN_EXPERT_MODEL`, `COGPLAN_EXPERT_KEY`,
//! `COGPLAN_SEARCH_URL` and `COGPLAN_SEARCH_KEY` override the file; API keys
//! are only read from the environment.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use super::HarnessError;
use crate::expert::{ExpertBackend, OpenAiCompatExpert, PromptSet, RemoteExpertConfig, ScriptedExpert};
use crate::planner::{Backends, PlannerConfig};
use crate::retrieval::{
    CachedSearch, LocalCorpus, NoSearchBackend, NoopHook, RemoteSearch, RemoteSearchConfig, SearchBackend,
    DEFAULT_CACHE_CAPACITY,
};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub url: Option<String>,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub url: Option<String>,
    pub corpus: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub cache_capacity: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub planner: PlannerConfig,
    pub expert: ModelSettings,
    pub generator: Option<ModelSettings>,
    pub search: SearchSettings,
    pub prompts_dir: Option<PathBuf>,
}

fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl Settings {
    pub fn from_toml(raw: &str, base: &Path) -> Result<Self, HarnessError> {
        let mut s: Settings =
            toml::from_str(raw).map_err(|e| HarnessError::Validation(format!("config: {e}")))?;
        rebase(&mut s.expert.script, base);
        if let Some(g) = &mut s.generator {
            rebase(&mut g.script, base);
        }
        rebase(&mut s.search.corpus, base);
        rebase(&mut s.search.cache_dir, base);
        rebase(&mut s.prompts_dir, base);
        s.planner
            .validate()
            .map_err(|e| HarnessError::Validation(format!("config: {e}")))?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))?;
        Settings::from_toml(&raw, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies the documented environment variables through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        let var = |name: &str| var(name).filter(|v| !v.trim().is_empty());
        if let Some(url) = var(crate::expert::remote_env::URL) {
            self.expert.url = Some(url);
        }
        if let Some(model) = var(crate::expert::remote_env::MODEL) {
            self.expert.model = Some(model);
        }
        if let Some(url) = var(crate::retrieval::remote_env::URL) {
            self.search.url = Some(url);
        }
    }
}

fn build_expert(
    settings: &ModelSettings,
    api_key: Option<String>,
) -> Result<Option<Arc<dyn ExpertBackend>>, HarnessError> {
    if let Some(script) = &settings.script {
        let expert = ScriptedExpert::load(script).map_err(|e| HarnessError::Validation(e.to_string()))?;
        return Ok(Some(Arc::new(expert)));
    }
    let Some(url) = &settings.url else {
        return Ok(None);
    };
    let mut config = RemoteExpertConfig::new(url.clone(), settings.model.clone().unwrap_or_else(|| "gpt-4o".into()));
    config.api_key = api_key;
    if let Some(secs) = settings.timeout_secs {
        config.timeout = Duration::from_secs(secs);
    }
    let expert = OpenAiCompatExpert::new(config).map_err(|e| HarnessError::Validation(e.to_string()))?;
    Ok(Some(Arc::new(expert)))
}

/// Owned backends for a run.
pub struct Runtime {
    pub expert: Option<Arc<dyn ExpertBackend>>,
    pub generator: Option<Arc<dyn ExpertBackend>>,
    pub search: Arc<dyn SearchBackend>,
    pub prompts: PromptSet,
}

impl Runtime {
    pub fn build(settings: &Settings, env: impl Fn(&str) -> Option<String>) -> Result<Self, HarnessError> {
        let key = |name: &str| env(name).filter(|k| !k.is_empty());
        let expert = build_expert(&settings.expert, key(crate::expert::remote_env::KEY))?;
        let generator = match &settings.generator {
            Some(g) => build_expert(g, key(crate::expert::remote_env::KEY))?,
            None => expert.clone(),
        };

        let raw: Arc<dyn SearchBackend> = if let Some(dir) = &settings.search.corpus {
            Arc::new(LocalCorpus::load(dir).map_err(|e| HarnessError::Validation(e.to_string()))?)
        } else if let Some(url) = &settings.search.url {
            let mut config = RemoteSearchConfig::new(url.clone());
            config.api_key = key(crate::retrieval::remote_env::KEY);
            Arc::new(RemoteSearch::new(config).map_err(|e| HarnessError::Validation(e.to_string()))?)
        } else {
            Arc::new(NoSearchBackend)
        };
        let mut cached = CachedSearch::new(raw, settings.search.cache_capacity.unwrap_or(DEFAULT_CACHE_CAPACITY));
        if let Some(dir) = &settings.search.cache_dir {
            cached = cached.with_disk(dir);
        }

        let prompts = match &settings.prompts_dir {
            Some(dir) => PromptSet::with_overrides(dir).map_err(|e| HarnessError::Validation(e.to_string()))?,
            None => PromptSet::default(),
        };
        Ok(Runtime {
            expert,
            generator,
            search: Arc::new(cached),
            prompts,
        })
    }

    /// Borrowed view for the planner. Planned modes need an expert; every
    /// mode needs a generator.
    pub fn backends(&self, needs_expert: bool) -> Result<Backends<'_>, HarnessError> {
        let missing = || {
            HarnessError::Validation(
                "no expert configured: pass --expert-script or set COGPLAN_EXPERT_URL".into(),
            )
        };
        let generator = self.generator.as_deref().ok_or_else(missing)?;
        let expert = match (&self.expert, needs_expert) {
            (Some(e), _) => e.as_ref(),
            (None, false) => generator,
            (None, true) => return Err(missing()),
        };
        Ok(Backends {
            expert,
            generator,
            search: self.search.as_ref(),
            hook: &NoopHook,
            prompts: &self.prompts,
        })
    }
}
