use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::{IndexSet, ParseStatus};

fn list_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\s*(?:\d+\s*(?:,\s*\d+\s*)*)?\]").expect("valid regex"))
}

/// Renders indices the way exemplar answers are written: `[2, 4, 5]`.
pub fn render_list(indices: &IndexSet) -> String {
    let items: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Extracts the first bracketed integer list from a model response.
///
/// A response that is exactly one list parses as `Ok`. A list found amid
/// other text, or one from which out-of-range indices had to be dropped,
/// parses as `Recovered`. Without any list the result is `Failed` with an
/// empty set. Duplicates collapse silently.
pub fn parse_answer_list(text: &str, n_sentences: usize) -> (IndexSet, ParseStatus) {
    let Some(m) = list_pattern().find(text) else {
        return (IndexSet::new(), ParseStatus::Failed);
    };
    let inner = &m.as_str()[1..m.as_str().len() - 1];
    let mut indices = IndexSet::new();
    let mut dropped = Vec::new();
    for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.parse::<usize>() {
            Ok(i) if i < n_sentences => {
                indices.insert(i);
            }
            _ => dropped.push(item.to_string()),
        }
    }
    if !dropped.is_empty() {
        log::warn!("dropped out-of-range sentence ids {dropped:?} (document has {n_sentences} sentences)");
    }
    let exact = text.trim() == m.as_str();
    let status = if exact && dropped.is_empty() {
        ParseStatus::Ok
    } else {
        ParseStatus::Recovered
    };
    (indices, status)
}

const ANSWERABLE: &str = "ANSWERABLE";
const UNANSWERABLE: &str = "UNANSWERABLE";

/// Parsed response of an explicit-unanswerability prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictResponse {
    pub indices: IndexSet,
    pub status: ParseStatus,
    /// `Some(true)` for UNANSWERABLE, `Some(false)` for ANSWERABLE, `None`
    /// when no verdict word leads the response.
    pub verdict_unanswerable: Option<bool>,
}

/// Parses `VERDICT` on the first non-empty line followed by the list.
pub fn parse_verdict_response(text: &str, n_sentences: usize) -> VerdictResponse {
    let trimmed = text.trim_start();
    let first_word: String = trimmed
        .chars()
        .take_while(|c| !c.is_whitespace() && *c != '[')
        .collect();
    let word = first_word
        .trim_matches(|c: char| !c.is_alphabetic())
        .to_uppercase();
    let verdict = match word.as_str() {
        UNANSWERABLE => Some(true),
        ANSWERABLE => Some(false),
        _ => None,
    };
    match verdict {
        Some(v) => {
            let rest = &trimmed[first_word.len()..];
            let (indices, status) = parse_answer_list(rest, n_sentences);
            VerdictResponse {
                indices,
                status,
                verdict_unanswerable: Some(v),
            }
        }
        None => {
            let (indices, status) = parse_answer_list(text, n_sentences);
            VerdictResponse {
                indices,
                status,
                verdict_unanswerable: None,
            }
        }
    }
}
