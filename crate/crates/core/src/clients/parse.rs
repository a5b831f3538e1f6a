//! Extraction of format class, length and action from raw policy text.
//!
//! The canonical response is `<think>reasoning</think><answer>ACTION</answer>`
//! where ACTION is one of `accept`, `continue`, `delete`. Whitespace is
//! allowed around the whole response, between the two blocks and around the
//! action word.

use super::{Action, FormatClass};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub format: FormatClass,
    pub length: usize,
    pub action: Action,
    /// Reasoning text, present only for fully compliant responses.
    pub think: Option<String>,
}

impl ParsedOutput {
    /// Canonical rendering of a fully compliant response.
    pub fn canonical(&self) -> Option<String> {
        let think = self.think.as_ref()?;
        Some(render(think, self.action))
    }
}

/// Renders the canonical `<think>..</think><answer>..</answer>` form.
pub fn render(think: &str, action: Action) -> String {
    format!("{THINK_OPEN}{think}{THINK_CLOSE}{ANSWER_OPEN}{action}{ANSWER_CLOSE}")
}

fn parse_max(text: &str) -> Option<(String, Action)> {
    let rest = text.trim().strip_prefix(THINK_OPEN)?;
    let close = rest.find(THINK_CLOSE)?;
    let think = &rest[..close];
    if think.contains(THINK_OPEN) || think.contains(ANSWER_OPEN) || think.contains(ANSWER_CLOSE) {
        return None;
    }
    let rest = rest[close + THINK_CLOSE.len()..].trim_start();
    let rest = rest.strip_prefix(ANSWER_OPEN)?;
    let close = rest.find(ANSWER_CLOSE)?;
    let action = Action::parse(&rest[..close])?;
    if !rest[close + ANSWER_CLOSE.len()..].trim().is_empty() {
        return None;
    }
    Some((think.to_string(), action))
}

fn first_answer(text: &str) -> Option<Action> {
    let mut rest = text;
    while let Some(open) = rest.find(ANSWER_OPEN) {
        let after = &rest[open + ANSWER_OPEN.len()..];
        let close = after.find(ANSWER_CLOSE)?;
        if let Some(action) = Action::parse(&after[..close]) {
            return Some(action);
        }
        rest = after;
    }
    None
}

/// Total over all inputs: malformed text degrades to `FormatClass::None`
/// with an invalid action.
pub fn parse_node_output(text: &str) -> ParsedOutput {
    let length = text.split_whitespace().count();
    if let Some((think, action)) = parse_max(text) {
        return ParsedOutput {
            format: FormatClass::Max,
            length,
            action,
            think: Some(think),
        };
    }
    match first_answer(text) {
        Some(action) => ParsedOutput {
            format: FormatClass::Corr,
            length,
            action,
            think: None,
        },
        None => ParsedOutput {
            format: FormatClass::None,
            length,
            action: Action::Invalid,
            think: None,
        },
    }
}
