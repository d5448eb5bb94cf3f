//! Canonical record types shared by every pipeline stage, their validation
//! rules, and line-delimited JSON persistence.
//!
//! Sentence index sets are stored as `BTreeSet<usize>`, which serializes as a
//! sorted ascending array, so files written from equal values are byte-equal.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A set of 0-based sentence indices.
pub type IndexSet = BTreeSet<usize>;

/// Language codes accepted when loading records.
pub const REGISTERED_LANGUAGES: &[&str] = &["de", "en", "ar", "fr", "uk"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unregistered language code `{0}`")]
pub struct UnknownLanguage(pub String);

/// A registered language code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Language(String);

impl Language {
    pub fn new(code: &str) -> Result<Self, UnknownLanguage> {
        let code = code.trim().to_ascii_lowercase();
        if REGISTERED_LANGUAGES.contains(&code.as_str()) {
            Ok(Language(code))
        } else {
            Err(UnknownLanguage(code))
        }
    }

    pub fn de() -> Self {
        Language("de".into())
    }

    pub fn en() -> Self {
        Language("en".into())
    }

    pub fn code(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Language {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::new(s)
    }
}

impl Serialize for Language {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Language {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let code = String::deserialize(deserializer)?;
        Language::new(&code).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub language: Language,
    pub original_language: Language,
    pub source_region: String,
    pub sentences: Vec<Sentence>,
    /// SHA-256 over the sentence texts; lets downstream artifacts detect
    /// that the source changed underneath them.
    #[serde(default)]
    pub content_hash: String,
}

impl Document {
    /// Builds a document from sentence texts, assigning consecutive indices
    /// and computing the content hash.
    pub fn from_texts<I, S>(
        id: impl Into<String>,
        language: Language,
        original_language: Language,
        source_region: impl Into<String>,
        texts: I,
    ) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sentences = texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence {
                index,
                text: text.into(),
            })
            .collect();
        let mut doc = Document {
            id: id.into(),
            language,
            original_language,
            source_region: source_region.into(),
            sentences,
            content_hash: String::new(),
        };
        doc.refresh_hash();
        doc
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn compute_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for s in &self.sentences {
            hasher.update(s.text.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(hasher.finalize())
    }

    pub fn refresh_hash(&mut self) {
        self.content_hash = self.compute_hash();
    }

    /// Renders the document as `[i] text` lines.
    pub fn render_with_ids(&self) -> String {
        self.sentences
            .iter()
            .map(|s| format!("[{}] {}", s.index, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.id.trim().is_empty() {
            problems.push("empty document id".to_string());
        }
        if self.sentences.is_empty() {
            problems.push(format!("document {} has no sentences", self.id));
        }
        for (pos, s) in self.sentences.iter().enumerate() {
            if s.index != pos {
                problems.push(format!(
                    "document {}: sentence at position {} has index {}",
                    self.id, pos, s.index
                ));
            }
            if s.text.trim().is_empty() {
                problems.push(format!("document {}: sentence {} is empty", self.id, pos));
            }
            if s.text.contains(['\n', '\r']) {
                problems.push(format!(
                    "document {}: sentence {} contains a line break",
                    self.id, pos
                ));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenStrategy {
    FullDocument,
    ThreeWordSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewState {
    Generated,
    Approved,
    Edited,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditEntry {
    pub previous_text: String,
    pub new_text: String,
    pub edited_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub document_id: String,
    pub language: Language,
    pub original_language: Language,
    pub text: String,
    pub gen_strategy: GenStrategy,
    pub review_state: ReviewState,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edit_history: Vec<EditEntry>,
    /// Pivot language when the text went through a translate-and-back round trip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retranslated_via: Option<Language>,
}

impl Question {
    pub fn is_annotatable(&self) -> bool {
        matches!(self.review_state, ReviewState::Approved | ReviewState::Edited)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: String,
    pub annotator_id: String,
    pub selected: IndexSet,
    pub no_answer: bool,
    pub created_at: DateTime<Utc>,
    /// Set on annotations that arrived after a question already had two.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub surplus: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerClass {
    NoAnswer,
    Contiguous,
    NonContiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(alias = "train")]
    Train,
    #[serde(alias = "dev")]
    Dev,
    #[serde(alias = "test")]
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub question_id: String,
    pub document_id: String,
    pub gold: IndexSet,
    pub answer_class: AnswerClass,
    pub raw_jaccard: f64,
    pub extended_jaccard: f64,
    /// Chance-corrected value of `raw_jaccard`.
    pub chance_corrected_jaccard: f64,
    /// Chance-corrected value of `extended_jaccard`.
    #[serde(default)]
    pub extended_chance_corrected_jaccard: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl QAInstance {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if (self.answer_class == AnswerClass::NoAnswer) != self.gold.is_empty() {
            problems.push(format!(
                "instance {}: answer class {:?} disagrees with gold size {}",
                self.question_id,
                self.answer_class,
                self.gold.len()
            ));
        }
        if self.extended_jaccard + 1e-12 < self.raw_jaccard {
            problems.push(format!(
                "instance {}: extended jaccard below raw jaccard",
                self.question_id
            ));
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    ZeroShot,
    FiveShot,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseStatus {
    Ok,
    Recovered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub question_id: String,
    pub predicted: IndexSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_unanswerable: Option<bool>,
    pub system_id: String,
    pub setting: Setting,
    pub parse_status: ParseStatus,
    /// Client error text when the model could not be reached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A single rule violation found by [`validate_annotation`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    EmptySelectionWithoutNoAnswer,
    SelectionWithNoAnswer,
    IndexOutOfRange { index: usize, n_sentences: usize },
    DocumentMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySelectionWithoutNoAnswer => f.write_str("empty selection without no_answer flag"),
            Violation::SelectionWithNoAnswer => {
                f.write_str("no_answer flag set together with a sentence selection")
            }
            Violation::IndexOutOfRange { index, n_sentences } => write!(
                f,
                "index out of range: {index} (document has {n_sentences} sentences)"
            ),
            Violation::DocumentMismatch => f.write_str("annotation targets a different document"),
        }
    }
}

/// Checks an annotation against its document. Violations are returned as
/// data; an empty vector means the record is valid.
pub fn validate_annotation(record: &AnnotationRecord, doc: &Document) -> Vec<Violation> {
    let mut violations = Vec::new();
    match (record.no_answer, record.selected.is_empty()) {
        (false, true) => violations.push(Violation::EmptySelectionWithoutNoAnswer),
        (true, false) => violations.push(Violation::SelectionWithNoAnswer),
        _ => {}
    }
    let n = doc.sentences.len();
    for &index in record.selected.range(n..) {
        violations.push(Violation::IndexOutOfRange {
            index,
            n_sentences: n,
        });
    }
    violations
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

/// Serializes records as one compact JSON object per line.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String, JsonlError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses line-delimited JSON. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| JsonlError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    let path = path.as_ref();
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| JsonlError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), JsonlError> {
    let path = path.as_ref();
    let io_err = |source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
