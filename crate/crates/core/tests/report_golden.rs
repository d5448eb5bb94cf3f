//! Rendered reports compared against reviewed golden files. Set
//! `UPDATE_GOLDEN=1` to rewrite them after an intentional format change.

use std::path::PathBuf;

use qaforge_core::agreement::classify_answer;
use qaforge_core::corpus::{IndexSet, ParseStatus, PredictionRecord, QAInstance, Setting};
use qaforge_core::evaluation::{evaluate, render_report, EvaluationOptions, EvaluationReport, ReportFormat};
use qaforge_core::extraction::UnansMode;

fn set(xs: &[usize]) -> IndexSet {
    xs.iter().copied().collect()
}

fn instance(id: &str, gold: &[usize]) -> QAInstance {
    let gold = set(gold);
    QAInstance {
        question_id: id.into(),
        document_id: format!("doc-{id}"),
        answer_class: classify_answer(&gold),
        gold,
        raw_jaccard: 1.0,
        extended_jaccard: 1.0,
        chance_corrected_jaccard: 1.0,
        extended_chance_corrected_jaccard: 1.0,
        split: None,
    }
}

fn pred(system: &str, id: &str, p: &[usize], status: ParseStatus, verdict: Option<bool>) -> PredictionRecord {
    PredictionRecord {
        question_id: id.into(),
        predicted: set(p),
        explicit_unanswerable: verdict,
        system_id: system.into(),
        setting: Setting::ZeroShot,
        parse_status: status,
        error: None,
    }
}

fn gold() -> Vec<QAInstance> {
    vec![
        instance("q1", &[1]),
        instance("q2", &[2, 3]),
        instance("q3", &[0, 4, 5]),
        instance("q4", &[]),
        instance("q5", &[6, 7]),
    ]
}

fn reports() -> Vec<EvaluationReport> {
    use ParseStatus::*;
    let gold = gold();
    let a = vec![
        pred("model-a", "q1", &[1], Ok, None),
        pred("model-a", "q2", &[2], Ok, None),
        pred("model-a", "q3", &[0, 4, 5, 6], Recovered, None),
        pred("model-a", "q4", &[], Ok, None),
        pred("model-a", "q5", &[], Failed, None),
    ];
    let b = vec![
        pred("model-b", "q1", &[1, 2], Ok, Some(false)),
        pred("model-b", "q2", &[2, 3], Ok, Some(false)),
        pred("model-b", "q3", &[5], Ok, Some(false)),
        pred("model-b", "q4", &[3], Ok, Some(false)),
        pred("model-b", "q5", &[6, 7], Ok, Some(false)),
    ];
    let opts = |mode| EvaluationOptions {
        unans_mode: mode,
        pairing: "de/de".into(),
        ..EvaluationOptions::default()
    };
    vec![
        evaluate(&gold, &a, &opts(UnansMode::Inferred)).unwrap(),
        evaluate(&gold, &b, &opts(UnansMode::Explicit)).unwrap(),
    ]
}

fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from golden file");
}

#[test]
fn markdown_matches_golden() {
    check_golden(
        "report.md",
        &render_report(&reports(), ReportFormat::Markdown, true),
    );
}

#[test]
fn csv_matches_golden() {
    check_golden("report.csv", &render_report(&reports(), ReportFormat::Csv, true));
}

#[test]
fn hand_computed_cells() {
    // model-a answerable: q1 (1,1,1), q2 (1,.5,.667), q3 (.75,1,.857), q5 (0,0,0)
    let r = &reports()[0];
    let s = r.sentence.unwrap();
    assert!((s.mean.precision - 2.75 / 4.0).abs() < 1e-12);
    assert!((s.mean.recall - 2.5 / 4.0).abs() < 1e-12);
    let f2 = 2.0 * 0.5 / 1.5;
    let f3 = 2.0 * 0.75 / 1.75;
    assert!((s.mean.f1 - (1.0 + f2 + f3) / 4.0).abs() < 1e-12);
    // q4 and q5 predicted empty, only q4 gold-empty: P 1/2, R 1
    let u = r.unanswerability.prf;
    assert!((u.precision - 0.5).abs() < 1e-12 && (u.recall - 1.0).abs() < 1e-12);
    assert_eq!(r.failed_parses, 1);

    // model-b never says UNANSWERABLE
    let u = &reports()[1].unanswerability;
    assert!(u.no_predicted_positives);
    assert_eq!(u.prf.precision, 0.0);
}

#[test]
fn formats_carry_identical_numbers() {
    let reports = reports();
    let md = render_report(&reports, ReportFormat::Markdown, false);
    let csv = render_report(&reports, ReportFormat::Csv, false);
    for line in csv.lines().skip(1) {
        let value = line.rsplit(',').next().unwrap();
        if value.contains('.') {
            assert!(md.contains(value), "{value} missing from markdown");
        }
    }
}

#[test]
fn failed_parses_are_footnoted() {
    let md = render_report(&reports(), ReportFormat::Markdown, false);
    assert!(md.contains("model-a (de/de): 1 of 5 responses could not be parsed"));
    assert!(!md.contains("model-b (de/de):"));
}

#[test]
fn rendering_is_deterministic() {
    let a = render_report(&reports(), ReportFormat::Csv, true);
    let b = render_report(&reports(), ReportFormat::Csv, true);
    assert_eq!(a, b);
}
