use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{IndexSet, Language, Sentence};
use crate::translation::{translate_sentence, TranslateError, Translator};

const ENGLISH_BANK: &str = include_str!("../../data/fewshot/en.json");

pub const ANSWERABLE_EXEMPLARS: usize = 3;
pub const UNANSWERABLE_EXEMPLARS: usize = 2;

/// A question with a document excerpt that keeps its original sentence IDs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub sentences: Vec<Sentence>,
    pub answer: IndexSet,
}

impl Exemplar {
    pub fn render_excerpt(&self) -> String {
        self.sentences
            .iter()
            .map(|s| format!("[{}] {}", s.index, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotBank {
    pub version: u32,
    pub language: Language,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Error)]
pub enum BankError {
    #[error("few-shot bank is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("few-shot bank needs {ANSWERABLE_EXEMPLARS} answerable and {UNANSWERABLE_EXEMPLARS} unanswerable exemplars, found {answerable} and {unanswerable}")]
    Composition { answerable: usize, unanswerable: usize },
    #[error("exemplar {exemplar}: answer id {id} is not among the excerpt's sentence ids")]
    AnswerOutsideExcerpt { exemplar: usize, id: usize },
    #[error("could not translate few-shot bank: {0}")]
    Translate(#[from] TranslateError),
    #[error("reading few-shot bank: {0}")]
    Io(#[from] std::io::Error),
}

impl FewShotBank {
    /// The bundled English bank.
    pub fn english() -> Self {
        Self::from_json(ENGLISH_BANK).expect("bundled bank is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, BankError> {
        let bank: FewShotBank = serde_json::from_str(text)?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, BankError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), BankError> {
        let answerable = self.exemplars.iter().filter(|e| !e.answer.is_empty()).count();
        let unanswerable = self.exemplars.len() - answerable;
        if answerable != ANSWERABLE_EXEMPLARS || unanswerable != UNANSWERABLE_EXEMPLARS {
            return Err(BankError::Composition {
                answerable,
                unanswerable,
            });
        }
        for (k, e) in self.exemplars.iter().enumerate() {
            for id in &e.answer {
                if !e.sentences.iter().any(|s| s.index == *id) {
                    return Err(BankError::AnswerOutsideExcerpt { exemplar: k, id: *id });
                }
            }
        }
        Ok(())
    }

    /// Translates questions and excerpts sentence by sentence; IDs and
    /// answers are unchanged.
    pub fn translate(&self, target: &Language, t: &dyn Translator) -> Result<Self, BankError> {
        if &self.language == target {
            return Ok(self.clone());
        }
        let src = &self.language;
        let mut exemplars = Vec::with_capacity(self.exemplars.len());
        for e in &self.exemplars {
            let question = translate_sentence(t, &e.question, src, target)?;
            let sentences = e
                .sentences
                .iter()
                .map(|s| {
                    translate_sentence(t, &s.text, src, target).map(|text| Sentence { index: s.index, text })
                })
                .collect::<Result<Vec<_>, _>>()?;
            exemplars.push(Exemplar {
                question,
                sentences,
                answer: e.answer.clone(),
            });
        }
        Ok(FewShotBank {
            version: self.version,
            language: target.clone(),
            exemplars,
        })
    }
}
