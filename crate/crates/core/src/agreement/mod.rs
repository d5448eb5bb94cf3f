//! Pairwise annotation agreement and gold-standard construction.
//!
//! Agreement between the two annotations of a question is the Jaccard index
//! of their selected sentence sets. Chance correction uses a single corpus
//! wide selection prior, so the correction is one affine map applied to
//! every question.

mod extension;
pub mod split;
pub mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationRecord, AnswerClass, Document, IndexSet, QAInstance, Question};

pub use extension::extend_annotations;

/// Default maximum distance (in sentences) between a promoted sentence and
/// the agreed sentence anchoring it.
pub const DEFAULT_MAX_DISTANCE: usize = 3;
/// Default minimum post-extension Jaccard for a question to be kept.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum AgreementError {
    #[error("selection prior is undefined for a corpus without sentences")]
    UndefinedPrior,
    #[error("expected agreement is 1; chance correction divides by zero")]
    DegenerateExpectedAgreement,
    #[error("question {question_id}: annotation references sentence {index} but document has {n_sentences}")]
    IndexOutOfRange {
        question_id: String,
        index: usize,
        n_sentences: usize,
    },
    #[error("question {0} has no known document")]
    UnknownQuestion(String),
    #[error("document {0} referenced by a question is missing")]
    MissingDocument(String),
}

/// The two annotations of one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationPair {
    pub question_id: String,
    pub document_id: String,
    pub a: IndexSet,
    pub b: IndexSet,
    pub n_sentences: usize,
    /// Sentences both annotators marked before any extension. Set by
    /// [`extend_annotations`] so that re-extending uses the same anchors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<IndexSet>,
}

impl AnnotationPair {
    pub fn new(
        question_id: impl Into<String>,
        document_id: impl Into<String>,
        a: IndexSet,
        b: IndexSet,
        n_sentences: usize,
    ) -> Result<Self, AgreementError> {
        let question_id = question_id.into();
        if let Some(&index) = a.iter().chain(b.iter()).find(|&&i| i >= n_sentences) {
            return Err(AgreementError::IndexOutOfRange {
                question_id,
                index,
                n_sentences,
            });
        }
        Ok(AnnotationPair {
            question_id,
            document_id: document_id.into(),
            a,
            b,
            n_sentences,
            anchors: None,
        })
    }

    pub fn intersection(&self) -> IndexSet {
        self.a.intersection(&self.b).copied().collect()
    }

    pub fn jaccard(&self) -> f64 {
        jaccard(&self.a, &self.b)
    }
}

/// Corpus-level chance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementParams {
    pub selection_prior: f64,
    pub expected_agreement: f64,
}

impl AgreementParams {
    pub fn from_prior(selection_prior: f64) -> Self {
        AgreementParams {
            selection_prior,
            expected_agreement: selection_prior * selection_prior,
        }
    }
}

/// Intersection over union; two empty sets agree completely.
pub fn jaccard(a: &IndexSet, b: &IndexSet) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Estimates the probability that any sentence is selected by an annotator:
/// all selections divided by twice the number of sentences.
pub fn selection_prior(pairs: &[AnnotationPair]) -> Result<AgreementParams, AgreementError> {
    let (selected, sentences) = pairs.iter().fold((0usize, 0usize), |(s, n), p| {
        (s + p.a.len() + p.b.len(), n + p.n_sentences)
    });
    if sentences == 0 {
        return Err(AgreementError::UndefinedPrior);
    }
    Ok(AgreementParams::from_prior(
        selected as f64 / (2.0 * sentences as f64),
    ))
}

pub fn chance_corrected_jaccard(observed: f64, params: &AgreementParams) -> Result<f64, AgreementError> {
    let expected = params.expected_agreement;
    if expected >= 1.0 {
        return Err(AgreementError::DegenerateExpectedAgreement);
    }
    Ok((observed - expected) / (1.0 - expected))
}

pub fn classify_answer(gold: &IndexSet) -> AnswerClass {
    match (gold.first(), gold.last()) {
        (None, _) | (_, None) => AnswerClass::NoAnswer,
        (Some(&lo), Some(&hi)) if hi - lo + 1 == gold.len() => AnswerClass::Contiguous,
        _ => AnswerClass::NonContiguous,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoldOutcome {
    Kept(QAInstance),
    Filtered { raw_jaccard: f64, extended_jaccard: f64 },
}

/// Extends a pair, then keeps it as a gold instance when the extended
/// (non-chance-corrected) Jaccard reaches `threshold`. Gold is the
/// intersection of the extended sets.
pub fn build_gold_instance(
    pair: &AnnotationPair,
    params: &AgreementParams,
    threshold: f64,
    max_distance: usize,
) -> Result<GoldOutcome, AgreementError> {
    let raw = pair.jaccard();
    let extended = extend_annotations(pair, max_distance);
    let ext = extended.jaccard();
    if ext < threshold {
        return Ok(GoldOutcome::Filtered {
            raw_jaccard: raw,
            extended_jaccard: ext,
        });
    }
    let gold = extended.intersection();
    Ok(GoldOutcome::Kept(QAInstance {
        question_id: pair.question_id.clone(),
        document_id: pair.document_id.clone(),
        answer_class: classify_answer(&gold),
        gold,
        raw_jaccard: raw,
        extended_jaccard: ext,
        chance_corrected_jaccard: chance_corrected_jaccard(raw, params)?,
        extended_chance_corrected_jaccard: chance_corrected_jaccard(ext, params)?,
        split: None,
    }))
}

/// Mean agreement figures for one population of pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementMeans {
    pub raw: f64,
    pub raw_chance_corrected: f64,
    pub extended: f64,
    pub extended_chance_corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    pub params: AgreementParams,
    pub threshold: f64,
    pub max_distance: usize,
    /// Over every pair, before filtering.
    pub all: AgreementMeans,
    /// Over retained pairs only.
    pub retained_means: AgreementMeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub instances: Vec<QAInstance>,
    pub summary: FilterSummary,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn means(raw: &[f64], ext: &[f64], params: &AgreementParams) -> Result<AgreementMeans, AgreementError> {
    let raw_mean = mean(raw);
    let ext_mean = mean(ext);
    Ok(AgreementMeans {
        raw: raw_mean,
        raw_chance_corrected: chance_corrected_jaccard(raw_mean, params)?,
        extended: ext_mean,
        extended_chance_corrected: chance_corrected_jaccard(ext_mean, params)?,
    })
}

/// Applies [`build_gold_instance`] to every pair, in input order.
pub fn filter_corpus(
    pairs: &[AnnotationPair],
    params: &AgreementParams,
    threshold: f64,
    max_distance: usize,
) -> Result<FilterOutcome, AgreementError> {
    let mut instances = Vec::new();
    let (mut raw_all, mut ext_all) = (Vec::new(), Vec::new());
    let (mut raw_kept, mut ext_kept) = (Vec::new(), Vec::new());
    for pair in pairs {
        match build_gold_instance(pair, params, threshold, max_distance)? {
            GoldOutcome::Kept(inst) => {
                raw_all.push(inst.raw_jaccard);
                ext_all.push(inst.extended_jaccard);
                raw_kept.push(inst.raw_jaccard);
                ext_kept.push(inst.extended_jaccard);
                instances.push(inst);
            }
            GoldOutcome::Filtered {
                raw_jaccard,
                extended_jaccard,
            } => {
                raw_all.push(raw_jaccard);
                ext_all.push(extended_jaccard);
            }
        }
    }
    let total = pairs.len();
    let retained = instances.len();
    let summary = FilterSummary {
        total,
        retained,
        retained_fraction: if total == 0 {
            0.0
        } else {
            retained as f64 / total as f64
        },
        params: *params,
        threshold,
        max_distance,
        all: means(&raw_all, &ext_all, params)?,
        retained_means: means(&raw_kept, &ext_kept, params)?,
    };
    Ok(FilterOutcome { instances, summary })
}

/// Counts from turning raw annotation records into pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingReport {
    pub questions_with_pair: usize,
    pub questions_single_annotation: usize,
    pub surplus_excluded: usize,
}

/// Groups annotation records into one pair per question. Surplus records are
/// dropped; of the remaining records the first two by completion time (from
/// distinct annotators) form the pair. Pairs come out ordered by question id.
pub fn pairs_from_annotations(
    records: &[AnnotationRecord],
    questions: &[Question],
    documents: &[Document],
) -> Result<(Vec<AnnotationPair>, PairingReport), AgreementError> {
    let question_docs: HashMap<&str, &str> = questions
        .iter()
        .map(|q| (q.id.as_str(), q.document_id.as_str()))
        .collect();
    let doc_len: HashMap<&str, usize> = documents
        .iter()
        .map(|d| (d.id.as_str(), d.sentences.len()))
        .collect();

    let mut report = PairingReport::default();
    let mut by_question: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        if r.surplus {
            report.surplus_excluded += 1;
            continue;
        }
        by_question.entry(r.question_id.as_str()).or_default().push(r);
    }

    let mut pairs = Vec::new();
    for (qid, mut recs) in by_question {
        recs.sort_by(|x, y| {
            x.created_at
                .cmp(&y.created_at)
                .then_with(|| x.annotator_id.cmp(&y.annotator_id))
        });
        let mut chosen: Vec<&AnnotationRecord> = Vec::with_capacity(2);
        for r in recs {
            if chosen.len() == 2 {
                report.surplus_excluded += 1;
            } else if chosen.iter().all(|c| c.annotator_id != r.annotator_id) {
                chosen.push(r);
            }
        }
        if chosen.len() < 2 {
            report.questions_single_annotation += 1;
            continue;
        }
        let doc_id = *question_docs
            .get(qid)
            .ok_or_else(|| AgreementError::UnknownQuestion(qid.to_string()))?;
        let n = *doc_len
            .get(doc_id)
            .ok_or_else(|| AgreementError::MissingDocument(doc_id.to_string()))?;
        pairs.push(AnnotationPair::new(
            qid,
            doc_id,
            chosen[0].selected.clone(),
            chosen[1].selected.clone(),
            n,
        )?);
        report.questions_with_pair += 1;
    }
    Ok((pairs, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> IndexSet {
        xs.iter().copied().collect()
    }

    fn pair(a: &[usize], b: &[usize], n: usize) -> AnnotationPair {
        AnnotationPair::new("q", "d", set(a), set(b), n).unwrap()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&[]), &set(&[])), 1.0);
        assert_eq!(jaccard(&set(&[1, 2, 3]), &set(&[1, 2, 3])), 1.0);
        assert!((jaccard(&set(&[0, 1]), &set(&[1, 2])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard(&set(&[]), &set(&[4])), 0.0);
    }

    #[test]
    fn prior_from_single_pair() {
        let p = selection_prior(&[pair(&[0, 1], &[4, 5], 10)]).unwrap();
        assert!((p.selection_prior - 0.2).abs() < 1e-12);
        assert!((p.expected_agreement - 0.04).abs() < 1e-12);
    }

    #[test]
    fn prior_with_all_empty_annotations_is_zero() {
        let p = selection_prior(&[pair(&[], &[], 8), pair(&[], &[], 3)]).unwrap();
        assert_eq!(p.selection_prior, 0.0);
        assert_eq!(p.expected_agreement, 0.0);
    }

    #[test]
    fn prior_of_empty_corpus_is_an_error() {
        assert_eq!(selection_prior(&[]), Err(AgreementError::UndefinedPrior));
    }

    #[test]
    fn expected_agreement_from_reported_prior() {
        let p = AgreementParams::from_prior(0.1856);
        assert!((p.expected_agreement - 0.034_447_36).abs() < 1e-9);
    }

    #[test]
    fn chance_correction_fixed_points() {
        let p = AgreementParams::from_prior(0.3);
        assert!(chance_corrected_jaccard(p.expected_agreement, &p).unwrap().abs() < 1e-15);
        assert_eq!(chance_corrected_jaccard(1.0, &p).unwrap(), 1.0);
        let q = AgreementParams {
            selection_prior: 0.1856,
            expected_agreement: 0.0344,
        };
        assert!((chance_corrected_jaccard(0.5, &q).unwrap() - 0.4822).abs() < 1e-4);
    }

    #[test]
    fn chance_correction_rejects_certain_agreement() {
        let p = AgreementParams::from_prior(1.0);
        assert_eq!(
            chance_corrected_jaccard(0.5, &p),
            Err(AgreementError::DegenerateExpectedAgreement)
        );
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_answer(&set(&[])), AnswerClass::NoAnswer);
        assert_eq!(classify_answer(&set(&[3, 4, 5])), AnswerClass::Contiguous);
        assert_eq!(classify_answer(&set(&[7])), AnswerClass::Contiguous);
        assert_eq!(classify_answer(&set(&[2, 5])), AnswerClass::NonContiguous);
    }

    #[test]
    fn gold_examples() {
        let params = AgreementParams::from_prior(0.2);
        match build_gold_instance(&pair(&[2, 3], &[2, 3], 10), &params, 0.5, 3).unwrap() {
            GoldOutcome::Kept(inst) => {
                assert_eq!(inst.gold, set(&[2, 3]));
                assert_eq!(inst.raw_jaccard, 1.0);
                assert_eq!(inst.answer_class, AnswerClass::Contiguous);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            build_gold_instance(&pair(&[], &[4], 10), &params, 0.5, 3).unwrap(),
            GoldOutcome::Filtered { raw_jaccard, .. } if raw_jaccard == 0.0
        ));
        match build_gold_instance(&pair(&[], &[], 10), &params, 0.5, 3).unwrap() {
            GoldOutcome::Kept(inst) => {
                assert!(inst.gold.is_empty());
                assert_eq!(inst.answer_class, AnswerClass::NoAnswer);
                assert_eq!(inst.raw_jaccard, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn threshold_boundary_is_kept() {
        let params = AgreementParams::from_prior(0.2);
        assert!(matches!(
            build_gold_instance(&pair(&[2], &[2, 8, 9], 12), &params, 0.5, 3).unwrap(),
            GoldOutcome::Filtered { .. }
        ));
        match build_gold_instance(&pair(&[0, 5], &[5], 12), &params, 0.5, 3).unwrap() {
            GoldOutcome::Kept(inst) => {
                assert_eq!(inst.extended_jaccard, 0.5);
                assert_eq!(inst.gold, set(&[5]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn filter_fixture_of_ten_pairs() {
        // five pairs reach J >= 0.5 after extension, five do not
        let pairs = vec![
            pair(&[1, 2], &[1, 2], 10),       // 1.0
            pair(&[4], &[4, 5], 10),          // extends to 1.0
            pair(&[], &[], 10),               // 1.0
            pair(&[0, 1, 2], &[1, 2, 3], 10), // extends to 1.0
            pair(&[3, 8], &[3], 10),          // 0.5 (8 is 5 away)
            pair(&[], &[2], 10),              // 0
            pair(&[1], &[5], 10),             // 0
            pair(&[0, 9], &[9, 4, 2], 10),    // 0.25
            pair(&[1, 5], &[1, 8, 9], 10),    // 0.25
            pair(&[0, 2, 4], &[1, 3, 5], 10), // 0
        ];
        let params = selection_prior(&pairs).unwrap();
        let out = filter_corpus(&pairs, &params, 0.5, 3).unwrap();
        assert_eq!(out.instances.len(), 5);
        assert_eq!(out.summary.retained, 5);
        assert_eq!(out.summary.total, 10);
        assert!((out.summary.retained_fraction - 0.5).abs() < 1e-12);
        assert!(out.summary.all.extended >= out.summary.all.raw);
        let ids: Vec<usize> = out.instances.iter().map(|i| i.gold.len()).collect();
        assert_eq!(ids, vec![2, 2, 0, 4, 1]);
    }

    #[test]
    fn filter_without_promotions_equals_raw_threshold() {
        let pairs = vec![
            pair(&[1, 2], &[1, 2], 10),
            pair(&[1], &[7], 10),
            pair(&[0, 5], &[5], 10),
            pair(&[2], &[2, 9], 12),
        ];
        let params = selection_prior(&pairs).unwrap();
        let out = filter_corpus(&pairs, &params, 0.5, 3).unwrap();
        let raw_kept: Vec<_> = pairs
            .iter()
            .filter(|p| p.jaccard() >= 0.5)
            .map(|p| p.question_id.clone())
            .collect();
        assert_eq!(out.instances.len(), raw_kept.len());
        for inst in &out.instances {
            assert_eq!(inst.raw_jaccard, inst.extended_jaccard);
        }
    }

    #[test]
    fn pairing_uses_completion_order_and_skips_surplus() {
        use crate::corpus::{GenStrategy, Language, ReviewState};
        let doc = Document::from_texts("d", Language::de(), Language::de(), "r", ["A.", "B.", "C."]);
        let q = Question {
            id: "q".into(),
            document_id: "d".into(),
            language: Language::de(),
            original_language: Language::de(),
            text: "Was?".into(),
            gen_strategy: GenStrategy::FullDocument,
            review_state: ReviewState::Approved,
            edit_history: vec![],
            retranslated_via: None,
        };
        let rec = |ann: &str, sel: &[usize], minute: u32, surplus: bool| AnnotationRecord {
            question_id: "q".into(),
            annotator_id: ann.into(),
            selected: set(sel),
            no_answer: sel.is_empty(),
            created_at: format!("2024-03-01T10:{minute:02}:00Z").parse().unwrap(),
            surplus,
        };
        let records = vec![
            rec("c", &[2], 30, true),
            rec("b", &[1], 20, false),
            rec("a", &[0], 10, false),
        ];
        let (pairs, report) = pairs_from_annotations(&records, &[q], &[doc]).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].a, set(&[0]));
        assert_eq!(pairs[0].b, set(&[1]));
        assert_eq!(pairs[0].n_sentences, 3);
        assert_eq!(report.surplus_excluded, 1);
    }
}
