//! Corpus statistics per original language and split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnswerClass, Document, QAInstance, Question, Split};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("instance {0} references an unknown question")]
    UnknownQuestion(String),
    #[error("instance {question} references unknown document {document}")]
    UnknownDocument { question: String, document: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64], kind: StdKind) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let denom = match kind {
            StdKind::Population => n as f64,
            StdKind::Sample if n > 1 => (n - 1) as f64,
            StdKind::Sample => 1.0,
        };
        MeanStd {
            mean,
            std: (ss / denom).sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub count: usize,
    pub percent: f64,
}

/// Statistics for one (language, split) cell.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub questions: usize,
    pub no_answer: ClassCount,
    pub contiguous: ClassCount,
    pub non_contiguous: ClassCount,
    pub documents: usize,
    pub questions_per_document: f64,
    pub sentences_per_document: MeanStd,
    pub chars_per_sentence: MeanStd,
    pub chars_per_question: MeanStd,
    /// Chance-corrected agreement before adjacency extension.
    pub agreement: MeanStd,
    /// Chance-corrected agreement after adjacency extension.
    pub agreement_extended: MeanStd,
    /// Over answerable questions.
    pub answer_sentences_per_question: MeanStd,
    /// Gold size over document length, answerable questions.
    pub answer_sentence_ratio: MeanStd,
}

/// Row key: `None` language means all languages; `None` split means total.
pub type CellKey = (Option<String>, Option<Split>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub std_kind: StdKind,
    pub cells: Vec<(CellKey, CellStats)>,
}

impl StatsReport {
    pub fn cell(&self, language: Option<&str>, split: Option<Split>) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|((l, s), _)| l.as_deref() == language && *s == split)
            .map(|(_, c)| c)
    }
}

struct Row<'a> {
    inst: &'a QAInstance,
    question: &'a Question,
    doc: &'a Document,
}

fn class_count(count: usize, total: usize) -> ClassCount {
    ClassCount {
        count,
        percent: if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        },
    }
}

fn cell_stats(rows: &[&Row<'_>], kind: StdKind) -> CellStats {
    let questions = rows.len();
    let count = |c: AnswerClass| rows.iter().filter(|r| r.inst.answer_class == c).count();

    let mut docs: BTreeMap<&str, &Document> = BTreeMap::new();
    for r in rows {
        docs.insert(r.doc.id.as_str(), r.doc);
    }
    let sent_counts: Vec<f64> = docs.values().map(|d| d.sentences.len() as f64).collect();
    let sent_chars: Vec<f64> = docs
        .values()
        .flat_map(|d| d.sentences.iter().map(|s| s.text.chars().count() as f64))
        .collect();
    let q_chars: Vec<f64> = rows
        .iter()
        .map(|r| r.question.text.chars().count() as f64)
        .collect();
    let agreement: Vec<f64> = rows.iter().map(|r| r.inst.chance_corrected_jaccard).collect();
    let agreement_ext: Vec<f64> = rows
        .iter()
        .map(|r| r.inst.extended_chance_corrected_jaccard)
        .collect();
    let answerable: Vec<&&Row<'_>> = rows.iter().filter(|r| !r.inst.gold.is_empty()).collect();
    let answer_sizes: Vec<f64> = answerable.iter().map(|r| r.inst.gold.len() as f64).collect();
    let answer_ratio: Vec<f64> = answerable
        .iter()
        .map(|r| r.inst.gold.len() as f64 / r.doc.sentences.len() as f64)
        .collect();

    CellStats {
        questions,
        no_answer: class_count(count(AnswerClass::NoAnswer), questions),
        contiguous: class_count(count(AnswerClass::Contiguous), questions),
        non_contiguous: class_count(count(AnswerClass::NonContiguous), questions),
        documents: docs.len(),
        questions_per_document: if docs.is_empty() {
            0.0
        } else {
            questions as f64 / docs.len() as f64
        },
        sentences_per_document: MeanStd::of(&sent_counts, kind),
        chars_per_sentence: MeanStd::of(&sent_chars, kind),
        chars_per_question: MeanStd::of(&q_chars, kind),
        agreement: MeanStd::of(&agreement, kind),
        agreement_extended: MeanStd::of(&agreement_ext, kind),
        answer_sentences_per_question: MeanStd::of(&answer_sizes, kind),
        answer_sentence_ratio: MeanStd::of(&answer_ratio, kind),
    }
}

/// Computes per-language (by the question's original language) and
/// per-split statistics, plus totals across languages.
pub fn compute_stats(
    instances: &[QAInstance],
    documents: &[Document],
    questions: &[Question],
    kind: StdKind,
) -> Result<StatsReport, StatsError> {
    let q_by_id: HashMap<&str, &Question> = questions.iter().map(|q| (q.id.as_str(), q)).collect();
    let d_by_id: HashMap<&str, &Document> = documents.iter().map(|d| (d.id.as_str(), d)).collect();

    let mut rows = Vec::with_capacity(instances.len());
    for inst in instances {
        let question = *q_by_id
            .get(inst.question_id.as_str())
            .ok_or_else(|| StatsError::UnknownQuestion(inst.question_id.clone()))?;
        let doc = *d_by_id
            .get(inst.document_id.as_str())
            .ok_or_else(|| StatsError::UnknownDocument {
                question: inst.question_id.clone(),
                document: inst.document_id.clone(),
            })?;
        rows.push(Row { inst, question, doc });
    }

    let languages: BTreeSet<String> = rows
        .iter()
        .map(|r| r.question.original_language.code().to_string())
        .collect();
    let mut splits: Vec<Option<Split>> = Split::ALL
        .iter()
        .copied()
        .filter(|s| rows.iter().any(|r| r.inst.split == Some(*s)))
        .map(Some)
        .collect();
    splits.push(None);

    let mut lang_keys: Vec<Option<String>> = languages.into_iter().map(Some).collect();
    lang_keys.push(None);

    let mut cells = Vec::new();
    for lang in &lang_keys {
        for split in &splits {
            let selected: Vec<&Row<'_>> = rows
                .iter()
                .filter(|r| {
                    lang.as_deref()
                        .is_none_or(|l| r.question.original_language.code() == l)
                        && split.is_none_or(|s| r.inst.split == Some(s))
                })
                .collect();
            cells.push(((lang.clone(), *split), cell_stats(&selected, kind)));
        }
    }
    Ok(StatsReport {
        std_kind: kind,
        cells,
    })
}

fn lang_label(lang: &Option<String>) -> &str {
    lang.as_deref().unwrap_or("all")
}

fn split_label(split: &Option<Split>) -> &'static str {
    split.map(Split::name).unwrap_or("total")
}

fn metric_rows(c: &CellStats) -> Vec<(&'static str, String)> {
    let ms = |m: &MeanStd| format!("{:.2} ± {:.2}", m.mean, m.std);
    let cc = |k: &ClassCount| format!("{} ({:.0}%)", k.count, k.percent);
    vec![
        ("Questions", c.questions.to_string()),
        ("No Answer", cc(&c.no_answer)),
        ("Contiguous Answer", cc(&c.contiguous)),
        ("Non-Contiguous Answer", cc(&c.non_contiguous)),
        ("Documents", c.documents.to_string()),
        ("Questions/Document", format!("{:.2}", c.questions_per_document)),
        ("Sentences/Document", ms(&c.sentences_per_document)),
        ("Chars/Sentence", ms(&c.chars_per_sentence)),
        ("Chars/Question", ms(&c.chars_per_question)),
        ("Agreement (Jaccard, chance-corrected)", ms(&c.agreement)),
        ("with adjacent sentences", ms(&c.agreement_extended)),
        ("Answer Sentences/Question", ms(&c.answer_sentences_per_question)),
        ("Answer Sentences/Total Sentences", ms(&c.answer_sentence_ratio)),
    ]
}

/// One table per language, one column per split.
pub fn render_markdown(report: &StatsReport) -> String {
    let mut out = String::new();
    let mut langs: Vec<&Option<String>> = Vec::new();
    for ((l, _), _) in &report.cells {
        if !langs.contains(&l) {
            langs.push(l);
        }
    }
    for lang in langs {
        let cols: Vec<&(CellKey, CellStats)> = report.cells.iter().filter(|((l, _), _)| l == lang).collect();
        let _ = writeln!(out, "### {}\n", lang_label(lang));
        let header: Vec<&str> = cols.iter().map(|((_, s), _)| split_label(s)).collect();
        let _ = writeln!(out, "| | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(header.len()));
        let per_col: Vec<Vec<(&str, String)>> = cols.iter().map(|(_, c)| metric_rows(c)).collect();
        for row in 0..per_col[0].len() {
            let values: Vec<&str> = per_col.iter().map(|c| c[row].1.as_str()).collect();
            let _ = writeln!(out, "| {} | {} |", per_col[0][row].0, values.join(" | "));
        }
        out.push('\n');
    }
    out
}

/// Long format: language, split, metric, value, std.
pub fn render_csv(report: &StatsReport) -> String {
    let mut out = String::from("language,split,metric,value,std\n");
    for ((lang, split), c) in &report.cells {
        let l = lang_label(lang);
        let s = split_label(split);
        let mut line = |metric: &str, value: String, std: String| {
            let _ = writeln!(out, "{l},{s},{metric},{value},{std}");
        };
        line("questions", c.questions.to_string(), String::new());
        line("no_answer", c.no_answer.count.to_string(), String::new());
        line("contiguous", c.contiguous.count.to_string(), String::new());
        line(
            "non_contiguous",
            c.non_contiguous.count.to_string(),
            String::new(),
        );
        line("documents", c.documents.to_string(), String::new());
        line(
            "questions_per_document",
            format!("{:.4}", c.questions_per_document),
            String::new(),
        );
        for (name, m) in [
            ("sentences_per_document", &c.sentences_per_document),
            ("chars_per_sentence", &c.chars_per_sentence),
            ("chars_per_question", &c.chars_per_question),
            ("agreement", &c.agreement),
            ("agreement_extended", &c.agreement_extended),
            ("answer_sentences_per_question", &c.answer_sentences_per_question),
            ("answer_sentence_ratio", &c.answer_sentence_ratio),
        ] {
            line(name, format!("{:.4}", m.mean), format!("{:.4}", m.std));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::classify_answer;
    use crate::corpus::{GenStrategy, IndexSet, Language, ReviewState};

    fn doc(id: &str, n: usize) -> Document {
        Document::from_texts(id, Language::de(), Language::de(), "r", (0..n).map(|_| "abcd"))
    }

    fn question(id: &str, doc: &str, lang: Language) -> Question {
        Question {
            id: id.into(),
            document_id: doc.into(),
            language: lang.clone(),
            original_language: lang,
            text: "Wie?".into(),
            gen_strategy: GenStrategy::FullDocument,
            review_state: ReviewState::Approved,
            edit_history: vec![],
            retranslated_via: None,
        }
    }

    fn instance(q: &str, d: &str, gold: &[usize], split: Split) -> QAInstance {
        let gold: IndexSet = gold.iter().copied().collect();
        QAInstance {
            question_id: q.into(),
            document_id: d.into(),
            answer_class: classify_answer(&gold),
            gold,
            raw_jaccard: 1.0,
            extended_jaccard: 1.0,
            chance_corrected_jaccard: 1.0,
            extended_chance_corrected_jaccard: 1.0,
            split: Some(split),
        }
    }

    #[test]
    fn questions_per_document_ratio() {
        let docs = vec![doc("d1", 4), doc("d2", 6)];
        let qs = vec![
            question("q1", "d1", Language::de()),
            question("q2", "d2", Language::de()),
        ];
        let insts = vec![
            instance("q1", "d1", &[1, 2], Split::Train),
            instance("q2", "d2", &[0, 1, 2, 3], Split::Train),
        ];
        let r = compute_stats(&insts, &docs, &qs, StdKind::Population).unwrap();
        let all = r.cell(None, None).unwrap();
        assert_eq!(all.questions_per_document, 1.0);
        assert_eq!(all.answer_sentences_per_question.mean, 3.0);
        assert_eq!(all.answer_sentences_per_question.std, 1.0);
        assert_eq!(all.sentences_per_document.mean, 5.0);
        assert_eq!(all.chars_per_sentence.mean, 4.0);
        assert_eq!(all.chars_per_question.mean, 4.0);
    }

    #[test]
    fn class_percentages_sum_to_hundred() {
        let docs = vec![doc("d1", 10)];
        let qs: Vec<Question> = (0..3)
            .map(|i| question(&format!("q{i}"), "d1", Language::en()))
            .collect();
        let insts = vec![
            instance("q0", "d1", &[], Split::Dev),
            instance("q1", "d1", &[2, 3], Split::Dev),
            instance("q2", "d1", &[2, 5], Split::Dev),
        ];
        let r = compute_stats(&insts, &docs, &qs, StdKind::Population).unwrap();
        let c = r.cell(Some("en"), Some(Split::Dev)).unwrap();
        let total = c.no_answer.percent + c.contiguous.percent + c.non_contiguous.percent;
        assert!((total - 100.0).abs() < 1e-9);
        assert_eq!(c.documents, 1);
        assert_eq!(c.questions_per_document, 3.0);
        assert!(r.cell(Some("en"), Some(Split::Train)).is_none());
    }

    #[test]
    fn dangling_reference_is_an_integrity_error() {
        let insts = vec![instance("q1", "missing", &[1], Split::Train)];
        let qs = vec![question("q1", "missing", Language::de())];
        assert_eq!(
            compute_stats(&insts, &[], &qs, StdKind::Population).unwrap_err(),
            StatsError::UnknownDocument {
                question: "q1".into(),
                document: "missing".into()
            }
        );
        assert_eq!(
            compute_stats(&insts, &[], &[], StdKind::Population).unwrap_err(),
            StatsError::UnknownQuestion("q1".into())
        );
    }

    #[test]
    fn sample_std_differs_from_population() {
        let v = [1.0, 3.0];
        assert_eq!(MeanStd::of(&v, StdKind::Population).std, 1.0);
        assert!((MeanStd::of(&v, StdKind::Sample).std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn renderers_carry_same_counts() {
        let docs = vec![doc("d1", 4)];
        let qs = vec![question("q1", "d1", Language::de())];
        let insts = vec![instance("q1", "d1", &[1], Split::Test)];
        let r = compute_stats(&insts, &docs, &qs, StdKind::Population).unwrap();
        let md = render_markdown(&r);
        assert!(md.contains("| Questions | 1 | 1 |"), "{md}");
        let csv = render_csv(&r);
        assert!(csv.contains("de,test,questions,1,"));
        assert!(csv.contains("all,total,answer_sentences_per_question,1.0000,0.0000"));
    }
}
