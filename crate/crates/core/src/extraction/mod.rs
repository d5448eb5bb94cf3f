//! Prompted sentence-ID extraction and classifier example export.

mod classifier;
mod fewshot;
mod parse;
mod prompt;
mod run;

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{Document, QAInstance, Question};

pub use classifier::{
    build_classifier_example, classifier_examples, ClassifierExample, TargetOutOfRange, CLS, DEFAULT_WINDOW,
    SEN, SEP,
};
pub use fewshot::{BankError, Exemplar, FewShotBank};
pub use parse::{parse_answer_list, parse_verdict_response, render_list, VerdictResponse};
pub use prompt::{
    build_messages, estimate_tokens, ModelProfile, PromptError, PromptTemplates, ShotMode, UnansMode,
    DEFAULT_TEMPERATURE,
};
pub use run::{interpret_response, run_extraction, RunOptions};

/// Everything needed to prompt for and score one question.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionItem {
    pub instance: QAInstance,
    pub question: Question,
    pub document: Document,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ItemError {
    #[error("instance refers to unknown question {0}")]
    UnknownQuestion(String),
    #[error("instance refers to unknown document {0}")]
    UnknownDocument(String),
}

/// Joins instances with their question and document records.
pub fn items_from_corpus(
    instances: &[QAInstance],
    questions: &[Question],
    documents: &[Document],
) -> Result<Vec<ExtractionItem>, ItemError> {
    let qs: HashMap<&str, &Question> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let ds: HashMap<&str, &Document> = documents.iter().map(|d| (d.id.as_str(), d)).collect();
    instances
        .iter()
        .map(|inst| {
            let question = qs
                .get(inst.question_id.as_str())
                .ok_or_else(|| ItemError::UnknownQuestion(inst.question_id.clone()))?;
            let document = ds
                .get(inst.document_id.as_str())
                .ok_or_else(|| ItemError::UnknownDocument(inst.document_id.clone()))?;
            Ok(ExtractionItem {
                instance: inst.clone(),
                question: (*question).clone(),
                document: (*document).clone(),
            })
        })
        .collect()
}
