use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, QAInstance, Question};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const SEN: &str = "[SEN]";
pub const DEFAULT_WINDOW: usize = 3;

/// One sentence-level training example for an external classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierExample {
    pub question_id: String,
    pub document_id: String,
    pub target_index: usize,
    pub text: String,
    /// Whether the target sentence is in the gold set; empty until labelled.
    pub label: Option<bool>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("target sentence {index} out of range for document {document} with {len} sentences")]
pub struct TargetOutOfRange {
    pub document: String,
    pub index: usize,
    pub len: usize,
}

/// `[CLS] question [SEP] left [SEN] target [SEN] right [SEP]` with up to
/// `window` context sentences per side.
pub fn build_classifier_example(
    q: &Question,
    doc: &Document,
    target_index: usize,
    window: usize,
) -> Result<ClassifierExample, TargetOutOfRange> {
    if target_index >= doc.len() {
        return Err(TargetOutOfRange {
            document: doc.id.clone(),
            index: target_index,
            len: doc.len(),
        });
    }
    let texts: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
    let left = &texts[target_index.saturating_sub(window)..target_index];
    let right = &texts[target_index + 1..(target_index + 1 + window).min(texts.len())];
    let mut parts: Vec<&str> = vec![CLS, &q.text, SEP];
    parts.extend_from_slice(left);
    parts.extend([SEN, texts[target_index], SEN]);
    parts.extend_from_slice(right);
    parts.push(SEP);
    Ok(ClassifierExample {
        question_id: q.id.clone(),
        document_id: doc.id.clone(),
        target_index,
        text: parts.join(" "),
        label: None,
    })
}

/// One labelled example per sentence of the instance's document.
pub fn classifier_examples(
    instance: &QAInstance,
    q: &Question,
    doc: &Document,
    window: usize,
) -> Vec<ClassifierExample> {
    (0..doc.len())
        .map(|i| {
            let mut ex = build_classifier_example(q, doc, i, window).expect("index in range");
            ex.label = Some(instance.gold.contains(&i));
            ex
        })
        .collect()
}
