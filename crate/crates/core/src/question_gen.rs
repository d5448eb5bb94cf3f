//! LLM question generation from full documents or three-word summaries,
//! and the manual review state machine.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, EditEntry, GenStrategy, Language, Question, ReviewState};
use crate::llm::{complete_with_retry, ChatMessage, ChatModel, ClientError, RetryPolicy};
use crate::template::{fill, load_or_default};

pub const DEFAULT_QUESTIONS_PER_DOCUMENT: usize = 3;
/// Share of documents assigned the summary strategy in a mixed run.
pub const SUMMARY_SHARE: f64 = 0.6;
const SUMMARY_TOKENS: usize = 3;

const SUMMARIZE_V1: &str = include_str!("../data/templates/qgen_summarize.v1.txt");
const FULL_V1: &str = include_str!("../data/templates/qgen_full.v1.txt");
const SUMMARY_V1: &str = include_str!("../data/templates/qgen_summary.v1.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub questions_per_document: usize,
    pub strategy: GenStrategy,
}

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>, strategy: GenStrategy) -> Self {
        GenerationConfig {
            model_id: model_id.into(),
            temperature: crate::extraction::DEFAULT_TEMPERATURE,
            questions_per_document: DEFAULT_QUESTIONS_PER_DOCUMENT,
            strategy,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenError::Config(format!(
                "temperature {} is negative",
                self.temperature
            )));
        }
        if self.questions_per_document == 0 {
            return Err(GenError::Config(
                "questions_per_document must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("model call failed: {0}")]
    Client(#[from] ClientError),
    #[error("document {document}: {message}")]
    Generation { document: String, message: String },
    #[error("invalid generation config: {0}")]
    Config(String),
}

impl GenError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenError::Client(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QgenTemplates {
    pub summarize: String,
    pub full: String,
    pub summary: String,
}

impl Default for QgenTemplates {
    fn default() -> Self {
        QgenTemplates {
            summarize: SUMMARIZE_V1.trim_end().to_string(),
            full: FULL_V1.trim_end().to_string(),
            summary: SUMMARY_V1.trim_end().to_string(),
        }
    }
}

impl QgenTemplates {
    pub fn load(dir: Option<&Path>) -> std::io::Result<Self> {
        Ok(QgenTemplates {
            summarize: load_or_default(dir, "qgen_summarize.v1.txt", SUMMARIZE_V1)?
                .trim_end()
                .to_string(),
            full: load_or_default(dir, "qgen_full.v1.txt", FULL_V1)?
                .trim_end()
                .to_string(),
            summary: load_or_default(dir, "qgen_summary.v1.txt", SUMMARY_V1)?
                .trim_end()
                .to_string(),
        })
    }
}

pub fn language_name(lang: &Language) -> &'static str {
    match lang.code() {
        "de" => "German",
        "en" => "English",
        "ar" => "Arabic",
        "fr" => "French",
        "uk" => "Ukrainian",
        _ => "the document's language",
    }
}

fn plain_text(doc: &Document) -> String {
    doc.sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Shared model-call settings for generation.
pub struct Generator<'a> {
    pub client: &'a dyn ChatModel,
    pub templates: QgenTemplates,
    pub retry: RetryPolicy,
}

impl<'a> Generator<'a> {
    pub fn new(client: &'a dyn ChatModel) -> Self {
        Generator {
            client,
            templates: QgenTemplates::default(),
            retry: RetryPolicy::default(),
        }
    }

    fn ask(&self, cfg: &GenerationConfig, prompt: String) -> Result<String, GenError> {
        let messages = [ChatMessage::user(prompt)];
        Ok(complete_with_retry(
            self.client,
            &cfg.model_id,
            &messages,
            cfg.temperature,
            &self.retry,
        )?)
    }

    pub fn summarize_document(&self, doc: &Document, cfg: &GenerationConfig) -> Result<String, GenError> {
        let prompt = fill(&self.templates.summarize, &[("document", &plain_text(doc))]);
        let raw = self.ask(cfg, prompt)?;
        clean_summary(&raw).ok_or_else(|| GenError::Generation {
            document: doc.id.clone(),
            message: "empty summary".into(),
        })
    }

    /// Prompt for the question request. Under the summary strategy it
    /// contains the summary only, never document text.
    pub fn question_prompt(&self, doc: &Document, cfg: &GenerationConfig, summary: Option<&str>) -> String {
        let n = cfg.questions_per_document.to_string();
        let language = language_name(&doc.language);
        match cfg.strategy {
            GenStrategy::FullDocument => fill(
                &self.templates.full,
                &[("document", &plain_text(doc)), ("n", &n), ("language", language)],
            ),
            GenStrategy::ThreeWordSummary => fill(
                &self.templates.summary,
                &[
                    ("summary", summary.unwrap_or_default()),
                    ("n", &n),
                    ("language", language),
                ],
            ),
        }
    }

    pub fn generate_questions(
        &self,
        doc: &Document,
        cfg: &GenerationConfig,
    ) -> Result<Vec<Question>, GenError> {
        cfg.validate()?;
        let summary = match cfg.strategy {
            GenStrategy::ThreeWordSummary => Some(self.summarize_document(doc, cfg)?),
            GenStrategy::FullDocument => None,
        };
        let prompt = self.question_prompt(doc, cfg, summary.as_deref());
        let raw = self.ask(cfg, prompt)?;
        let texts = parse_questions(&raw, cfg.questions_per_document);
        if texts.is_empty() {
            return Err(GenError::Generation {
                document: doc.id.clone(),
                message: "no parseable questions in model output".into(),
            });
        }
        let tag = match cfg.strategy {
            GenStrategy::FullDocument => 'f',
            GenStrategy::ThreeWordSummary => 's',
        };
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(k, text)| Question {
                id: format!("{}-{tag}{}", doc.id, k + 1),
                document_id: doc.id.clone(),
                language: doc.language.clone(),
                original_language: doc.original_language.clone(),
                text,
                gen_strategy: cfg.strategy,
                review_state: ReviewState::Generated,
                edit_history: Vec::new(),
                retranslated_via: None,
            })
            .collect())
    }

    /// Generates for many documents concurrently. Each document gets the
    /// strategy from `strategy_for`; failures are returned per document.
    pub fn generate_corpus(
        &self,
        documents: &[Document],
        cfg: &GenerationConfig,
        strategy_for: &(dyn Fn(&Document) -> GenStrategy + Sync),
    ) -> (Vec<Question>, Vec<GenError>) {
        let results: Vec<Result<Vec<Question>, GenError>> = documents
            .par_iter()
            .map(|doc| {
                let mut c = cfg.clone();
                c.strategy = strategy_for(doc);
                self.generate_questions(doc, &c)
            })
            .collect();
        let mut questions = Vec::new();
        let mut errors = Vec::new();
        for r in results {
            match r {
                Ok(qs) => questions.extend(qs),
                Err(e) => errors.push(e),
            }
        }
        (questions, errors)
    }
}

/// First non-empty line, punctuation stripped per token, at most three
/// tokens. `None` when nothing is left.
pub fn clean_summary(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let tokens: Vec<&str> = line
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .take(SUMMARY_TOKENS)
        .collect();
    (!tokens.is_empty()).then(|| tokens.join(" "))
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\(?\d+[.):]|[-*•–])\s*").expect("valid regex"))
}

/// Reads questions from numbered, bulleted or plain one-per-line output.
/// Keeps lines ending in a question mark, dedups case-insensitively and
/// stops after `limit`.
pub fn parse_questions(raw: &str, limit: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = list_marker().replace(line.trim(), "");
        let text = line
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .trim_matches(|c| matches!(c, '"' | '“' | '”' | '„' | '*'))
            .trim()
            .to_string();
        if text.is_empty() || !(text.ends_with('?') || text.ends_with('؟')) {
            continue;
        }
        if seen.insert(text.to_lowercase()) {
            out.push(text);
            if out.len() == limit {
                break;
            }
        }
    }
    out
}

/// Picks the summary strategy for round(0.6·n) documents by seeded shuffle,
/// full-document for the rest.
pub fn assign_strategies(documents: &[Document], seed: u64) -> Vec<(String, GenStrategy)> {
    let mut ids: Vec<String> = documents.iter().map(|d| d.id.clone()).collect();
    ids.sort();
    let mut shuffled = ids.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (SUMMARY_SHARE * ids.len() as f64).round() as usize;
    let summary: HashSet<&String> = shuffled.iter().take(k).collect();
    ids.iter()
        .map(|id| {
            let s = if summary.contains(id) {
                GenStrategy::ThreeWordSummary
            } else {
                GenStrategy::FullDocument
            };
            (id.clone(), s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "text", rename_all = "lowercase")]
pub enum ReviewAction {
    Approve,
    Edit(String),
    Reject,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReviewError {
    #[error("question {0} was rejected and cannot be reviewed again")]
    Rejected(String),
    #[error("question {0}: edited text is empty")]
    EmptyEdit(String),
}

/// Applies one review action. Rejected is terminal; edits append to the
/// history and never rewrite it.
pub fn review_question(
    q: &Question,
    action: &ReviewAction,
    at: DateTime<Utc>,
) -> Result<Question, ReviewError> {
    if q.review_state == ReviewState::Rejected {
        return Err(ReviewError::Rejected(q.id.clone()));
    }
    let mut out = q.clone();
    match action {
        ReviewAction::Approve => out.review_state = ReviewState::Approved,
        ReviewAction::Reject => out.review_state = ReviewState::Rejected,
        ReviewAction::Edit(text) => {
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            if text.is_empty() {
                return Err(ReviewError::EmptyEdit(q.id.clone()));
            }
            out.edit_history.push(EditEntry {
                previous_text: q.text.clone(),
                new_text: text.clone(),
                edited_at: at,
            });
            out.text = text;
            out.review_state = ReviewState::Edited;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnModel, Role};
    use proptest::prelude::*;
    use std::sync::Mutex;

    fn shelter() -> Document {
        Document::from_texts(
            "shelter",
            Language::en(),
            Language::de(),
            "Augsburg",
            [
                "Women's shelter",
                "The women's shelter offers protection to women affected by violence.",
                "You can call the emergency hotline at any time.",
            ],
        )
    }

    fn reply(text: &'static str) -> FnModel<impl Fn(&[ChatMessage]) -> Result<String, ClientError>> {
        FnModel(move |_: &[ChatMessage]| Ok(text.to_string()))
    }

    #[test]
    fn summaries_are_cleaned() {
        let cfg = GenerationConfig::new("m", GenStrategy::ThreeWordSummary);
        let m = reply("domestic violence support");
        assert_eq!(
            Generator::new(&m).summarize_document(&shelter(), &cfg).unwrap(),
            "domestic violence support"
        );
        let m = reply("Recognition of foreign degrees here.");
        assert_eq!(
            Generator::new(&m).summarize_document(&shelter(), &cfg).unwrap(),
            "Recognition of foreign"
        );
        let m = reply("");
        assert!(matches!(
            Generator::new(&m).summarize_document(&shelter(), &cfg),
            Err(GenError::Generation { .. })
        ));
    }

    #[test]
    fn numbered_list_parsed() {
        let m = reply("1. What is X?\n2. Where is Y?");
        let cfg = GenerationConfig::new("m", GenStrategy::FullDocument);
        let qs = Generator::new(&m).generate_questions(&shelter(), &cfg).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].text, "What is X?");
        assert_eq!(qs[1].id, "shelter-f2");
        assert!(qs.iter().all(|q| q.review_state == ReviewState::Generated));
    }

    #[test]
    fn duplicates_collapse() {
        let m = reply("- Where can I get help?\n- where can I get help?\n");
        let cfg = GenerationConfig::new("m", GenStrategy::FullDocument);
        assert_eq!(
            Generator::new(&m)
                .generate_questions(&shelter(), &cfg)
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn no_questions_is_an_error() {
        let m = reply("Sorry, I cannot help with that.");
        let cfg = GenerationConfig::new("m", GenStrategy::FullDocument);
        assert!(Generator::new(&m).generate_questions(&shelter(), &cfg).is_err());
    }

    #[test]
    fn summary_prompt_excludes_document() {
        let prompts = Mutex::new(Vec::new());
        let m = FnModel(|msgs: &[ChatMessage]| {
            let content = msgs
                .iter()
                .find(|m| m.role == Role::User)
                .unwrap()
                .content
                .clone();
            let first = prompts.lock().unwrap().is_empty();
            prompts.lock().unwrap().push(content);
            Ok(if first {
                "domestic violence support".into()
            } else {
                "1. Who helps?".into()
            })
        });
        let cfg = GenerationConfig::new("m", GenStrategy::ThreeWordSummary);
        let qs = Generator::new(&m).generate_questions(&shelter(), &cfg).unwrap();
        assert_eq!(qs[0].id, "shelter-s1");
        let prompts = prompts.into_inner().unwrap();
        assert!(prompts[1].contains("domestic violence support"));
        for s in &shelter().sentences {
            assert!(!prompts[1].contains(&s.text));
        }
    }

    #[test]
    fn review_transitions() {
        let m = reply("1. What are the emergency numbers provided?");
        let cfg = GenerationConfig::new("m", GenStrategy::FullDocument);
        let q = Generator::new(&m)
            .generate_questions(&shelter(), &cfg)
            .unwrap()
            .remove(0);
        let now = Utc::now();
        let edited = review_question(
            &q,
            &ReviewAction::Edit("What emergency numbers are available?".into()),
            now,
        )
        .unwrap();
        assert_eq!(edited.review_state, ReviewState::Edited);
        assert_eq!(edited.edit_history.len(), 1);
        assert_eq!(
            edited.edit_history[0].previous_text,
            "What are the emergency numbers provided?"
        );
        assert_eq!(
            review_question(&q, &ReviewAction::Approve, now)
                .unwrap()
                .review_state,
            ReviewState::Approved
        );
        let rejected = review_question(&q, &ReviewAction::Reject, now).unwrap();
        assert!(matches!(
            review_question(&rejected, &ReviewAction::Approve, now),
            Err(ReviewError::Rejected(_))
        ));
    }

    #[test]
    fn mixed_assignment_share() {
        let docs: Vec<Document> = (0..10)
            .map(|i| Document::from_texts(format!("d{i}"), Language::de(), Language::de(), "r", ["x"]))
            .collect();
        let a = assign_strategies(&docs, 7);
        let summary = a
            .iter()
            .filter(|(_, s)| *s == GenStrategy::ThreeWordSummary)
            .count();
        assert_eq!(summary, 6);
        assert_eq!(a, assign_strategies(&docs, 7));
    }

    proptest! {
        #[test]
        fn summary_prompt_never_contains_sentences(
            texts in proptest::collection::vec("[A-Za-z]{4,10}( [A-Za-z]{4,10}){2,6}\\.", 1..8),
            summary in "[a-z]{3,8} [a-z]{3,8} [a-z]{3,8}",
        ) {
            let doc = Document::from_texts("d", Language::en(), Language::en(), "r", texts);
            let m = reply("");
            let g = Generator::new(&m);
            let cfg = GenerationConfig::new("m", GenStrategy::ThreeWordSummary);
            let prompt = g.question_prompt(&doc, &cfg, Some(&summary));
            for s in &doc.sentences {
                prop_assert!(!prompt.contains(&s.text));
            }
        }

        #[test]
        fn review_history_is_append_only(edits in proptest::collection::vec("[a-z ]{1,20}\\?", 1..6)) {
            let m = reply("1. Start?");
            let cfg = GenerationConfig::new("m", GenStrategy::FullDocument);
            let mut q = Generator::new(&m).generate_questions(&shelter(), &cfg).unwrap().remove(0);
            let mut history = Vec::new();
            for e in &edits {
                q = review_question(&q, &ReviewAction::Edit(e.clone()), Utc::now()).unwrap();
                prop_assert!(q.edit_history.starts_with(&history));
                history = q.edit_history.clone();
            }
            prop_assert_eq!(q.edit_history.len(), edits.len());
        }
    }
}
