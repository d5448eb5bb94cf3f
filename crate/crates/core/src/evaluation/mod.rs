//! Scoring of sentence selections and unanswerability detection.
//!
//! Sentence-level metrics are macro averages over answerable questions;
//! an empty prediction on an answerable question scores zero everywhere.
//! Unanswerability is a binary task with "unanswerable" as the positive
//! class. All sums run in input order so reports are byte-stable.

mod report;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::stats::{MeanStd, StdKind};
use crate::agreement::AnnotationPair;
use crate::corpus::{IndexSet, ParseStatus, PredictionRecord, QAInstance, Setting};
use crate::extraction::UnansMode;

pub use report::{render_report, ReportFormat};

pub const DEFAULT_AGREEMENT_SEEDS: u64 = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PRF {
    /// Harmonic F with 0 when P + R = 0.
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PRF {
            precision,
            recall,
            f1,
        }
    }

    pub const PERFECT: PRF = PRF {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("sentence scoring needs a non-empty gold set; route unanswerable questions to unanswerability scoring")]
    EmptyGold,
    #[error("cannot average an empty list of scores")]
    NoScores,
    #[error("explicit mode needs explicit_unanswerable on every prediction; missing for question {0}")]
    MissingExplicitFlag(String),
    #[error("no prediction for question {0}")]
    MissingPrediction(String),
    #[error("more than one prediction for question {0}")]
    DuplicatePrediction(String),
    #[error("{golds} gold items but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
}

/// Per-question sentence P/R/F. P is 0 for an empty prediction.
pub fn score_sentences(gold: &IndexSet, pred: &IndexSet) -> Result<PRF, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let hits = gold.intersection(pred).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        hits / pred.len() as f64
    };
    let recall = hits / gold.len() as f64;
    Ok(PRF::new(precision, recall))
}

/// Whether unanswerable questions enter the sentence-level average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceConvention {
    /// Only answerable questions are averaged.
    #[default]
    AnswerableOnly,
    /// Unanswerable questions also count: an empty prediction scores 1 on
    /// every metric, anything else 0.
    Inclusive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroPRF {
    pub mean: PRF,
    /// Population standard deviation over questions.
    pub std: PRF,
    pub n: usize,
}

/// Component-wise mean and standard deviation.
pub fn aggregate_macro(per_question: &[PRF]) -> Result<MacroPRF, EvalError> {
    if per_question.is_empty() {
        return Err(EvalError::NoScores);
    }
    let column = |f: fn(&PRF) -> f64| {
        let values: Vec<f64> = per_question.iter().map(f).collect();
        MeanStd::of(&values, StdKind::Population)
    };
    let p = column(|x| x.precision);
    let r = column(|x| x.recall);
    let f = column(|x| x.f1);
    Ok(MacroPRF {
        mean: PRF {
            precision: p.mean,
            recall: r.mean,
            f1: f.mean,
        },
        std: PRF {
            precision: p.std,
            recall: r.std,
            f1: f.std,
        },
        n: per_question.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryScore {
    pub prf: PRF,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// No question was predicted unanswerable; precision is reported as 0.
    pub no_predicted_positives: bool,
    /// No question is unanswerable in the gold data; recall is reported as 1.
    pub no_gold_positives: bool,
}

/// Binary P/R/F from (gold unanswerable, predicted unanswerable) pairs.
pub fn binary_score(pairs: impl IntoIterator<Item = (bool, bool)>) -> BinaryScore {
    let mut s = BinaryScore::default();
    for (gold, pred) in pairs {
        match (gold, pred) {
            (true, true) => s.true_positives += 1,
            (false, true) => s.false_positives += 1,
            (true, false) => s.false_negatives += 1,
            (false, false) => s.true_negatives += 1,
        }
    }
    let predicted = s.true_positives + s.false_positives;
    let actual = s.true_positives + s.false_negatives;
    s.no_predicted_positives = predicted == 0;
    s.no_gold_positives = actual == 0;
    let precision = if predicted == 0 {
        0.0
    } else {
        s.true_positives as f64 / predicted as f64
    };
    let recall = if actual == 0 {
        1.0
    } else {
        s.true_positives as f64 / actual as f64
    };
    s.prf = PRF::new(precision, recall);
    s
}

/// Whether a prediction says "unanswerable" under the given mode.
pub fn predicts_unanswerable(pred: &PredictionRecord, mode: UnansMode) -> Result<bool, EvalError> {
    match mode {
        UnansMode::Inferred => Ok(pred.predicted.is_empty()),
        UnansMode::Explicit => pred
            .explicit_unanswerable
            .ok_or_else(|| EvalError::MissingExplicitFlag(pred.question_id.clone())),
    }
}

/// Question-level unanswerability P/R/F; `golds[i]` pairs with `preds[i]`.
pub fn score_unanswerability(
    golds: &[IndexSet],
    preds: &[PredictionRecord],
    mode: UnansMode,
) -> Result<BinaryScore, EvalError> {
    if golds.len() != preds.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let pairs = golds
        .iter()
        .zip(preds)
        .map(|(g, p)| Ok((g.is_empty(), predicts_unanswerable(p, mode)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(binary_score(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDiagnostic {
    pub question_id: String,
    pub gold_size: usize,
    pub predicted_size: usize,
    pub gold_unanswerable: bool,
    pub predicted_unanswerable: bool,
    /// Sentence scores; absent for unanswerable questions under the
    /// answerable-only convention.
    pub sentence: Option<PRF>,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCountBucket {
    pub gold_size: usize,
    pub n: usize,
    pub mean: PRF,
}

/// Mean sentence scores of answerable questions grouped by gold size.
pub fn report_by_answer_count(diagnostics: &[QuestionDiagnostic]) -> Vec<AnswerCountBucket> {
    let mut groups: BTreeMap<usize, Vec<PRF>> = BTreeMap::new();
    for d in diagnostics.iter().filter(|d| d.gold_size > 0) {
        if let Some(s) = d.sentence {
            groups.entry(d.gold_size).or_default().push(s);
        }
    }
    groups
        .into_iter()
        .map(|(gold_size, scores)| {
            let m = aggregate_macro(&scores).expect("non-empty group");
            AnswerCountBucket {
                gold_size,
                n: m.n,
                mean: m.mean,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOptions {
    pub unans_mode: UnansMode,
    pub convention: SentenceConvention,
    /// Label of the language pairing, e.g. `de/de`.
    pub pairing: String,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            unans_mode: UnansMode::Inferred,
            convention: SentenceConvention::AnswerableOnly,
            pairing: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub system_id: String,
    pub pairing: String,
    pub setting: Option<Setting>,
    pub unans_mode: UnansMode,
    pub convention: SentenceConvention,
    /// `None` when no question qualifies for sentence scoring.
    pub sentence: Option<MacroPRF>,
    pub unanswerability: BinaryScore,
    pub by_answer_count: Vec<AnswerCountBucket>,
    pub questions: usize,
    pub failed_parses: usize,
    pub recovered_parses: usize,
    pub diagnostics: Vec<QuestionDiagnostic>,
}

/// Scores one system's predictions against the gold instances.
pub fn evaluate(
    instances: &[QAInstance],
    predictions: &[PredictionRecord],
    opts: &EvaluationOptions,
) -> Result<EvaluationReport, EvalError> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(p.question_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.question_id.clone()));
        }
    }
    let gold_ids: HashSet<&str> = instances.iter().map(|i| i.question_id.as_str()).collect();
    let extra = predictions
        .iter()
        .filter(|p| !gold_ids.contains(p.question_id.as_str()))
        .count();
    if extra > 0 {
        log::warn!("{extra} predictions have no gold instance and are ignored");
    }

    let mut diagnostics = Vec::with_capacity(instances.len());
    let mut sentence_scores = Vec::new();
    let mut binary = Vec::with_capacity(instances.len());
    for inst in instances {
        let pred = by_id
            .get(inst.question_id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(inst.question_id.clone()))?;
        let gold_unans = inst.gold.is_empty();
        let pred_unans = predicts_unanswerable(pred, opts.unans_mode)?;
        binary.push((gold_unans, pred_unans));
        let sentence = if !gold_unans {
            Some(score_sentences(&inst.gold, &pred.predicted)?)
        } else if opts.convention == SentenceConvention::Inclusive {
            Some(if pred.predicted.is_empty() {
                PRF::PERFECT
            } else {
                PRF::default()
            })
        } else {
            None
        };
        if let Some(s) = sentence {
            sentence_scores.push(s);
        }
        diagnostics.push(QuestionDiagnostic {
            question_id: inst.question_id.clone(),
            gold_size: inst.gold.len(),
            predicted_size: pred.predicted.len(),
            gold_unanswerable: gold_unans,
            predicted_unanswerable: pred_unans,
            sentence,
            parse_status: pred.parse_status,
        });
    }

    let matched: Vec<&&PredictionRecord> = instances
        .iter()
        .filter_map(|i| by_id.get(i.question_id.as_str()))
        .collect();
    let system_id = matched.first().map(|p| p.system_id.clone()).unwrap_or_default();
    let setting = matched.first().map(|p| p.setting);
    let failed_parses = matched
        .iter()
        .filter(|p| p.parse_status == ParseStatus::Failed)
        .count();
    let recovered_parses = matched
        .iter()
        .filter(|p| p.parse_status == ParseStatus::Recovered)
        .count();

    Ok(EvaluationReport {
        system_id,
        pairing: opts.pairing.clone(),
        setting,
        unans_mode: opts.unans_mode,
        convention: opts.convention,
        sentence: aggregate_macro(&sentence_scores).ok(),
        unanswerability: binary_score(binary),
        by_answer_count: report_by_answer_count(&diagnostics),
        questions: instances.len(),
        failed_parses,
        recovered_parses,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAgreement {
    pub seeds: u64,
    pub questions: usize,
    /// Mean over seeds of the macro sentence scores, and their spread.
    pub sentence_mean: PRF,
    pub sentence_std: PRF,
    pub unanswerability_mean: PRF,
    pub unanswerability_std: PRF,
}

/// Treats one annotator per question, picked at random, as gold and the
/// other as a system, and averages the resulting scores over `seeds` runs.
pub fn human_agreement_estimate(pairs: &[AnnotationPair], seeds: u64, base_seed: u64) -> HumanAgreement {
    let mut sentence_runs = Vec::with_capacity(seeds as usize);
    let mut unans_runs = Vec::with_capacity(seeds as usize);
    for s in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(s));
        let mut scores = Vec::new();
        let mut binary = Vec::with_capacity(pairs.len());
        for p in pairs {
            let (gold, system) = if rng.gen_bool(0.5) {
                (&p.a, &p.b)
            } else {
                (&p.b, &p.a)
            };
            binary.push((gold.is_empty(), system.is_empty()));
            if let Ok(prf) = score_sentences(gold, system) {
                scores.push(prf);
            }
        }
        sentence_runs.push(aggregate_macro(&scores).map(|m| m.mean).unwrap_or_default());
        unans_runs.push(binary_score(binary).prf);
    }
    let summarize = |runs: &[PRF]| {
        let col =
            |f: fn(&PRF) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>(), StdKind::Population);
        let (p, r, f) = (col(|x| x.precision), col(|x| x.recall), col(|x| x.f1));
        (
            PRF {
                precision: p.mean,
                recall: r.mean,
                f1: f.mean,
            },
            PRF {
                precision: p.std,
                recall: r.std,
                f1: f.std,
            },
        )
    };
    let (sentence_mean, sentence_std) = summarize(&sentence_runs);
    let (unanswerability_mean, unanswerability_std) = summarize(&unans_runs);
    HumanAgreement {
        seeds,
        questions: pairs.len(),
        sentence_mean,
        sentence_std,
        unanswerability_mean,
        unanswerability_std,
    }
}
