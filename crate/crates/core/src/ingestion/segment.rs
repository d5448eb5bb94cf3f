//! Rule-based sentence segmentation.
//!
//! A boundary is placed after terminal punctuation (`.`, `!`, `?`, `…`, `؟`,
//! optionally followed by closing quotes or brackets) when whitespace
//! follows. A period does not end a sentence when the token before it is a
//! listed abbreviation, (German) a street name such as `Hauptstr.` or an
//! ordinal number before a month, or when the next word starts in
//! lowercase. Blank lines are hard boundaries. Boundaries only ever fall
//! on whitespace, so URLs, decimal numbers and similar dotted tokens are
//! never split.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use crate::corpus::{Language, Sentence};

const ABBREVIATION_FILES: &[(&str, &str)] = &[
    ("de", include_str!("../../data/abbreviations/de.txt")),
    ("en", include_str!("../../data/abbreviations/en.txt")),
    ("fr", include_str!("../../data/abbreviations/fr.txt")),
    ("uk", include_str!("../../data/abbreviations/uk.txt")),
    ("ar", include_str!("../../data/abbreviations/ar.txt")),
];

const GERMAN_MONTHS: &[&str] = &[
    "januar",
    "jänner",
    "februar",
    "märz",
    "april",
    "mai",
    "juni",
    "juli",
    "august",
    "september",
    "oktober",
    "november",
    "dezember",
];

fn abbreviations(language: &Language) -> &'static HashSet<String> {
    static TABLE: OnceLock<HashMap<&'static str, HashSet<String>>> = OnceLock::new();
    static EMPTY: OnceLock<HashSet<String>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        ABBREVIATION_FILES
            .iter()
            .map(|(code, text)| {
                let set = text
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .map(str::to_lowercase)
                    .collect();
                (*code, set)
            })
            .collect()
    });
    table
        .get(language.code())
        .unwrap_or_else(|| EMPTY.get_or_init(HashSet::new))
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…' | '؟')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '»' | '«' | '“' | '”' | '’' | '‘')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '»' | '«' | '„' | '“' | '‘')
}

struct Segmenter<'a> {
    chars: Vec<char>,
    abbreviations: &'a HashSet<String>,
    german: bool,
}

impl Segmenter<'_> {
    /// Token ending at `end` (exclusive), stopping at whitespace.
    fn token_before(&self, end: usize) -> String {
        let start = self.chars[..end]
            .iter()
            .rposition(|c| c.is_whitespace())
            .map_or(0, |p| p + 1);
        self.chars[start..end]
            .iter()
            .skip_while(|c| is_opening(**c))
            .collect()
    }

    fn next_word(&self, from: usize) -> String {
        self.chars[from..]
            .iter()
            .skip_while(|c| c.is_whitespace() || is_opening(**c))
            .take_while(|c| !c.is_whitespace())
            .collect()
    }

    /// Whether the period at `dot` ends a sentence, given the next word.
    fn period_ends_sentence(&self, dot: usize, next: &str) -> bool {
        let token = self.token_before(dot);
        if token.is_empty() {
            return true;
        }
        let lower = token.to_lowercase();
        if self.abbreviations.contains(&lower) {
            return false;
        }
        if self.german && lower.ends_with("str") {
            return false;
        }
        if self.german && token.chars().all(|c| c.is_ascii_digit()) {
            let next_lower = next.to_lowercase();
            let next_lower = next_lower.trim_end_matches(|c: char| !c.is_alphanumeric());
            if GERMAN_MONTHS.contains(&next_lower) {
                return false;
            }
        }
        if next.chars().next().is_some_and(|c| c.is_lowercase()) {
            return false;
        }
        true
    }

    /// Char ranges of sentences.
    fn split(&self) -> Vec<(usize, usize)> {
        let chars = &self.chars;
        let n = chars.len();
        let mut out = Vec::new();
        let mut start = 0;
        let mut i = 0;
        while i < n {
            let c = chars[i];
            if c == '\n' {
                // blank line: newline, optional horizontal space, newline
                let mut j = i + 1;
                while j < n && chars[j] != '\n' && chars[j].is_whitespace() {
                    j += 1;
                }
                if j < n && chars[j] == '\n' {
                    out.push((start, i));
                    start = j;
                    i = j + 1;
                    continue;
                }
            }
            if is_terminal(c) {
                let mut end = i + 1;
                while end < n && (is_terminal(chars[end]) || is_closing(chars[end])) {
                    end += 1;
                }
                if end >= n {
                    break;
                }
                if chars[end].is_whitespace() {
                    let next = self.next_word(end);
                    let only_periods = chars[i..end]
                        .iter()
                        .filter(|c| is_terminal(**c))
                        .all(|c| *c == '.');
                    let boundary = if only_periods && chars[i..end].iter().filter(|c| **c == '.').count() == 1
                    {
                        self.period_ends_sentence(i, &next)
                    } else {
                        !next.chars().next().is_some_and(|c| c.is_lowercase())
                    };
                    if boundary {
                        out.push((start, end));
                        start = end;
                    }
                }
                i = end;
                continue;
            }
            i += 1;
        }
        out.push((start, n));
        out
    }
}

fn normalize(chars: &[char]) -> String {
    let s: String = chars.iter().collect();
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits plain text into sentences with consecutive indices from 0.
/// Sentence texts have internal whitespace collapsed to single spaces.
pub fn segment_sentences(text: &str, language: &Language) -> Vec<Sentence> {
    let seg = Segmenter {
        chars: text.chars().collect(),
        abbreviations: abbreviations(language),
        german: language.code() == "de",
    };
    seg.split()
        .into_iter()
        .map(|(a, b)| normalize(&seg.chars[a..b]))
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(index, text)| Sentence { index, text })
        .collect()
}
