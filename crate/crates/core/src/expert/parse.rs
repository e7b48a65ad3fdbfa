//! Structured-output grammar for expert replies.
//!
//! * action: a case-insensitive `TEXT_SEARCH` / `IMAGE_SEARCH` / `NO_SEARCH`
//!   label, bare or behind an `action:` key (JSON-ish or `Action: ...`).
//! * list: a numbered (`1.` / `1)`) or bulleted (`-`, `*`) list, optionally
//!   inside a fenced block; the first contiguous list wins and trailing
//!   prose is ignored.
//! * answer: any non-blank text, trimmed.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::state::{RetrievalAction, N_MAX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no retrieval action label found")]
    NoAction,
    #[error("no list items found")]
    NoList,
    #[error("empty answer")]
    EmptyAnswer,
    #[error("no yes/no verdict found")]
    NoVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expected {
    Action,
    QuerySet,
    Answer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Parsed {
    Action(RetrievalAction),
    Queries(Vec<String>),
    Answer(String),
}

static KEYED_ACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)["']?\baction["']?\s*[:=]\s*["']?\s*(text|image|no)[_-]search\b"#).unwrap()
});
static BARE_ACTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(text|image|no)[_-]search\b").unwrap());
static LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d{1,3}[.)]|[-*\u{2022}])\s+(.*\S)\s*$").unwrap());
static VERDICT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

pub fn parse_expert_output(raw: &str, expected: Expected) -> Result<Parsed, ParseError> {
    match expected {
        Expected::Action => parse_action(raw).map(Parsed::Action),
        Expected::QuerySet => parse_query_set(raw).map(Parsed::Queries),
        Expected::Answer => parse_answer(raw).map(Parsed::Answer),
    }
}

fn label_to_action(label: &str) -> RetrievalAction {
    match label.to_ascii_lowercase().as_str() {
        "text" => RetrievalAction::TextSearch,
        "image" => RetrievalAction::ImageSearch,
        _ => RetrievalAction::NoSearch,
    }
}

pub fn parse_action(raw: &str) -> Result<RetrievalAction, ParseError> {
    KEYED_ACTION
        .captures(raw)
        .or_else(|| BARE_ACTION.captures(raw))
        .map(|caps| label_to_action(&caps[1]))
        .ok_or(ParseError::NoAction)
}

/// Items of the first list in `raw`, in order, trimmed and deduplicated.
pub fn parse_list(raw: &str) -> Result<Vec<String>, ParseError> {
    let region = fenced_region(raw).unwrap_or(raw);
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    let mut started = false;
    for line in region.lines() {
        if let Some(caps) = LIST_ITEM.captures(line) {
            started = true;
            let item = strip_quotes(caps[1].trim());
            if !item.is_empty() && seen.insert(item.to_string()) {
                items.push(item.to_string());
            }
        } else if started && !line.trim().is_empty() {
            break;
        }
    }
    if items.is_empty() {
        Err(ParseError::NoList)
    } else {
        Ok(items)
    }
}

/// A list capped at the query-set limit.
pub fn parse_query_set(raw: &str) -> Result<Vec<String>, ParseError> {
    let mut items = parse_list(raw)?;
    items.truncate(N_MAX);
    Ok(items)
}

pub fn parse_answer(raw: &str) -> Result<String, ParseError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        Err(ParseError::EmptyAnswer)
    } else {
        Ok(trimmed.to_string())
    }
}

pub fn parse_verdict(raw: &str) -> Result<bool, ParseError> {
    VERDICT
        .captures(raw)
        .map(|caps| caps[1].eq_ignore_ascii_case("yes"))
        .ok_or(ParseError::NoVerdict)
}

fn fenced_region(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    // skip an info string such as ```text
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('\'', '\''), ('\u{201c}', '\u{201d}')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn action_label_normalization() {
        assert_eq!(
            parse_expert_output("Action: text_search", Expected::Action),
            Ok(Parsed::Action(RetrievalAction::TextSearch))
        );
        assert_eq!(parse_action("IMAGE_SEARCH"), Ok(RetrievalAction::ImageSearch));
        assert_eq!(parse_action("no-search."), Ok(RetrievalAction::NoSearch));
        assert_eq!(
            parse_action(r#"{"reason": "need text_search?", "action": "NO_SEARCH"}"#),
            Ok(RetrievalAction::NoSearch)
        );
    }

    #[test]
    fn action_without_label_is_error() {
        assert_eq!(
            parse_action("I think we should browse the web"),
            Err(ParseError::NoAction)
        );
        assert_eq!(parse_action("INFO_SEARCH"), Err(ParseError::NoAction));
    }

    #[test]
    fn numbered_list() {
        assert_eq!(
            parse_expert_output("1. q-one\n2. q-two", Expected::QuerySet),
            Ok(Parsed::Queries(vec!["q-one".into(), "q-two".into()]))
        );
    }

    #[test]
    fn list_ignores_trailing_prose_and_fences() {
        let raw = "Sure:\n```\n1) \"alpha\"\n\n2) beta\n```\nThose should work. 3. gamma";
        assert_eq!(parse_list(raw).unwrap(), vec!["alpha", "beta"]);
        let raw = "- a\n- b\nnote: done\n- c";
        assert_eq!(parse_list(raw).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn query_set_is_capped_and_deduplicated() {
        let raw = (1..=8).map(|i| format!("{i}. q{}", i % 7)).collect::<Vec<_>>().join("\n");
        let items = parse_query_set(&raw).unwrap();
        assert_eq!(items.len(), N_MAX);
        assert_eq!(items[0], "q1");
    }

    #[test]
    fn list_without_items_is_error() {
        assert_eq!(parse_list("just prose"), Err(ParseError::NoList));
        assert_eq!(parse_list("1.   "), Err(ParseError::NoList));
    }

    #[test]
    fn answer_and_verdict() {
        assert_eq!(parse_answer("  x  "), Ok("x".into()));
        assert_eq!(parse_answer(" \n"), Err(ParseError::EmptyAnswer));
        assert_eq!(parse_verdict("Yes."), Ok(true));
        assert_eq!(parse_verdict("NO"), Ok(false));
        assert!(parse_verdict("maybe").is_err());
    }

    proptest! {
        #[test]
        fn parser_is_total(raw in "\\PC*") {
            for expected in [Expected::Action, Expected::QuerySet, Expected::Answer] {
                let _ = parse_expert_output(&raw, expected);
            }
            let _ = parse_verdict(&raw);
        }

        #[test]
        fn parsed_lists_are_valid_query_sets(raw in "(([0-9]\\. |- )?[a-z ]{0,6}\n){0,9}") {
            if let Ok(items) = parse_query_set(&raw) {
                prop_assert!(crate::state::QuerySet::new(items).is_ok());
            }
        }
    }
}
