//! Prompt templates.
//!
//! Templates ship as text files under `prompts/` and can be replaced by a
//! directory holding files with the same names. A template is a system part
//! and a user part separated by a line containing only `---`. Leading lines
//! starting with `#!` are metadata and are dropped. Placeholders use
//! `{{name}}`.

use std::fs;
use std::path::Path;

use super::ExpertError;

const REFORMULATE: &str = include_str!("../../prompts/reformulate.txt");
const SELECT_ACTION: &str = include_str!("../../prompts/select_action.txt");
const GENERATE: &str = include_str!("../../prompts/generate.txt");
const EXTRACT_CLAIMS: &str = include_str!("../../prompts/extract_claims.txt");
const JUDGE_CLAIM: &str = include_str!("../../prompts/judge_claim.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    system: String,
    user: String,
}

impl Template {
    pub fn parse(raw: &str) -> Result<Self, ExpertError> {
        let body: Vec<&str> = raw
            .lines()
            .skip_while(|line| line.starts_with("#!"))
            .collect();
        let split = body
            .iter()
            .position(|line| line.trim() == "---")
            .ok_or_else(|| ExpertError::Config("prompt template lacks a `---` separator".into()))?;
        Ok(Template {
            system: body[..split].join("\n").trim().to_string(),
            user: body[split + 1..].join("\n").trim().to_string(),
        })
    }

    /// Fills placeholders, returning `(system, user)`.
    pub fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        (fill(&self.system, vars), fill(&self.user, vars))
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub reformulate: Template,
    pub select_action: Template,
    pub generate: Template,
    pub extract_claims: Template,
    pub judge_claim: Template,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            reformulate: Template::parse(REFORMULATE).expect("bundled template"),
            select_action: Template::parse(SELECT_ACTION).expect("bundled template"),
            generate: Template::parse(GENERATE).expect("bundled template"),
            extract_claims: Template::parse(EXTRACT_CLAIMS).expect("bundled template"),
            judge_claim: Template::parse(JUDGE_CLAIM).expect("bundled template"),
        }
    }
}

impl PromptSet {
    /// Bundled templates, with any file present in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, ExpertError> {
        let mut set = PromptSet::default();
        let slots: [(&str, &mut Template); 5] = [
            ("reformulate.txt", &mut set.reformulate),
            ("select_action.txt", &mut set.select_action),
            ("generate.txt", &mut set.generate),
            ("extract_claims.txt", &mut set.extract_claims),
            ("judge_claim.txt", &mut set.judge_claim),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.is_file() {
                let raw = fs::read_to_string(&path)
                    .map_err(|e| ExpertError::Config(format!("{}: {e}", path.display())))?;
                *slot = Template::parse(&raw)?;
            }
        }
        Ok(set)
    }
}
