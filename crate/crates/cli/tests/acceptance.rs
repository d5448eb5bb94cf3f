//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero when a gated criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use qaforge_cli::config::PipelineConfig;
use qaforge_core::agreement::stats::{compute_stats, StdKind};
use qaforge_core::agreement::{
    chance_corrected_jaccard, classify_answer, extend_annotations, filter_corpus, jaccard,
    pairs_from_annotations, selection_prior, AgreementParams, AnnotationPair,
};
use qaforge_core::corpus::{
    read_jsonl, AnnotationRecord, Document, IndexSet, ParseStatus, PredictionRecord, QAInstance, Question,
    Setting, Split,
};
use qaforge_core::evaluation::{
    evaluate, human_agreement_estimate, score_sentences, EvalError, EvaluationOptions, SentenceConvention,
};
use qaforge_core::extraction::{parse_answer_list, UnansMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}
use Outcome::*;

struct Criterion {
    name: &'static str,
    /// Smoke checks report their result without failing the suite.
    gate: bool,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "chance-correction constant",
            gate: true,
            run: chance_constant,
        },
        Criterion {
            name: "affine consistency of chance correction",
            gate: true,
            run: affine_consistency,
        },
        Criterion {
            name: "adjacency extension oracle",
            gate: true,
            run: extension_oracle,
        },
        Criterion {
            name: "metric oracle",
            gate: true,
            run: metric_oracle,
        },
        Criterion {
            name: "released corpus statistics",
            gate: true,
            run: released_corpus,
        },
        Criterion {
            name: "end-to-end determinism",
            gate: true,
            run: end_to_end,
        },
        Criterion {
            name: "cross-language identity",
            gate: true,
            run: cross_language_identity,
        },
        Criterion {
            name: "parser robustness",
            gate: true,
            run: parser_robustness,
        },
        Criterion {
            name: "live model regime (smoke)",
            gate: false,
            run: live_mode,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Pass(d) => ("PASS", d),
            Fail(d) => {
                if c.gate {
                    failed += 1;
                }
                ("FAIL", d)
            }
            Skip(d) => ("SKIP", d),
        };
        println!("{tag}  {}: {detail}", c.name);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn check(ok: bool, pass: String, fail: String) -> Outcome {
    if ok {
        Pass(pass)
    } else {
        Fail(fail)
    }
}

fn set_from_mask(mask: u32) -> IndexSet {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

fn chance_constant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1856);
    let mut worst: f64 = 0.0;
    // Corpora of 1, 5 and 10 pairs over 1250 sentences with 464 selections.
    for pairs in [1usize, 5, 10] {
        for _ in 0..20 {
            let n = 1250 / pairs;
            let mut remaining = 464usize;
            let mut corpus = Vec::new();
            for k in 0..pairs {
                let take = if k + 1 == pairs {
                    remaining
                } else {
                    rng.gen_range(0..=remaining)
                }
                .min(2 * n);
                remaining -= take;
                let a_len = take.min(n);
                let b_len = take - a_len;
                let a: IndexSet = (0..a_len).collect();
                let b: IndexSet = (n - b_len..n).collect();
                corpus.push(AnnotationPair::new(format!("q{k}"), "d", a, b, n).unwrap());
            }
            if remaining != 0 {
                continue;
            }
            let params = selection_prior(&corpus).unwrap();
            if (params.selection_prior - 0.1856).abs() > 1e-12 {
                return Fail(format!("prior {} instead of 0.1856", params.selection_prior));
            }
            worst = worst.max((params.expected_agreement - 0.0344).abs());
        }
    }
    check(
        worst <= 1e-4,
        format!("P(sel)=0.1856 gives 0.0344 (max deviation {worst:.6})"),
        format!("deviation {worst:.6} exceeds 0.0001"),
    )
}

fn affine_consistency() -> Outcome {
    let params = AgreementParams {
        selection_prior: 0.0344f64.sqrt(),
        expected_agreement: 0.0344,
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for (raw, reported) in [(0.50, 0.48), (0.61, 0.59), (0.86, 0.86), (0.34, 0.31)] {
        let got = chance_corrected_jaccard(raw, &params).unwrap();
        ok &= (got - reported).abs() <= 0.015;
        lines.push(format!("{raw:.2}->{got:.4}"));
    }
    check(
        ok,
        lines.join(", "),
        format!("outside ±0.015: {}", lines.join(", ")),
    )
}

/// Promotes a singly-marked sentence when a run of marked sentences joins
/// it to an agreed one and the nearest agreed sentence is close enough.
fn brute_extend(a: &IndexSet, b: &IndexSet, n: usize, d: usize) -> (IndexSet, IndexSet) {
    let agreed: Vec<usize> = a.intersection(b).copied().collect();
    let marked = |i: usize| a.contains(&i) || b.contains(&i);
    let (mut ea, mut eb) = (a.clone(), b.clone());
    for s in 0..n {
        if a.contains(&s) == b.contains(&s) {
            continue;
        }
        let nearest = agreed.iter().map(|&g| s.abs_diff(g)).min();
        let joined = agreed.iter().any(|&g| (s.min(g)..=s.max(g)).all(marked));
        if joined && nearest.is_some_and(|x| x <= d) {
            ea.insert(s);
            eb.insert(s);
        }
    }
    (ea, eb)
}

fn extension_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut promoted = 0usize;
    for case in 0..10_000 {
        let n = rng.gen_range(1..=15);
        let density = rng.gen_range(0.1..0.7);
        let a: IndexSet = (0..n).filter(|_| rng.gen_bool(density)).collect();
        let b: IndexSet = (0..n).filter(|_| rng.gen_bool(density)).collect();
        let pair = AnnotationPair::new("q", "d", a.clone(), b.clone(), n).unwrap();
        let ext = extend_annotations(&pair, 3);
        let (ea, eb) = brute_extend(&a, &b, n, 3);
        if ext.a != ea || ext.b != eb {
            return Fail(format!(
                "case {case}: a={a:?} b={b:?} n={n}: got {:?}/{:?}, oracle {ea:?}/{eb:?}",
                ext.a, ext.b
            ));
        }
        let again = extend_annotations(&ext, 3);
        if again.a != ext.a || again.b != ext.b {
            return Fail(format!("case {case}: second extension changed a={a:?} b={b:?}"));
        }
        if jaccard(&ext.a, &ext.b) < jaccard(&a, &b) {
            return Fail(format!("case {case}: Jaccard decreased for a={a:?} b={b:?}"));
        }
        promoted += ext.a.len() + ext.b.len() - a.len() - b.len();
    }
    Pass(format!(
        "10000 random pairs match the reference; idempotent; J never decreases ({promoted} promotions)"
    ))
}

fn oracle_prf(gold: u32, pred: u32) -> (f64, f64, f64) {
    let tp = (gold & pred).count_ones() as f64;
    let fp = (pred & !gold).count_ones() as f64;
    let fn_ = (gold & !pred).count_ones() as f64;
    let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let r = tp / (tp + fn_);
    let f = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    (p, r, f)
}

fn same(x: f64, y: f64) -> bool {
    (x - y).abs() <= 1e-12
}

fn instance(id: &str, gold: IndexSet) -> QAInstance {
    QAInstance {
        question_id: id.into(),
        document_id: "d".into(),
        answer_class: classify_answer(&gold),
        gold,
        raw_jaccard: 1.0,
        extended_jaccard: 1.0,
        chance_corrected_jaccard: 1.0,
        extended_chance_corrected_jaccard: 1.0,
        split: None,
    }
}

fn prediction(id: &str, predicted: IndexSet, explicit: Option<bool>) -> PredictionRecord {
    PredictionRecord {
        question_id: id.into(),
        predicted,
        explicit_unanswerable: explicit,
        system_id: "oracle".into(),
        setting: Setting::ZeroShot,
        parse_status: ParseStatus::Ok,
        error: None,
    }
}

fn metric_oracle() -> Outcome {
    // every gold/pred pair over six sentences
    for g in 0u32..64 {
        for p in 0u32..64 {
            let got = score_sentences(&set_from_mask(g), &set_from_mask(p));
            if g == 0 {
                if got != Err(EvalError::EmptyGold) {
                    return Fail(format!("empty gold accepted for pred {p:06b}"));
                }
                continue;
            }
            let got = got.unwrap();
            let (op, or, of) = oracle_prf(g, p);
            if !(same(got.precision, op) && same(got.recall, or) && same(got.f1, of)) {
                return Fail(format!(
                    "gold {g:06b} pred {p:06b}: {got:?} vs ({op}, {or}, {of})"
                ));
            }
        }
    }

    // 100k sampled corpora of 1-8 questions drawn from the same 4096 pairs
    let mut rng = ChaCha8Rng::seed_from_u64(4096);
    for case in 0..100_000 {
        let k = rng.gen_range(1..=8);
        let unans = if rng.gen_bool(0.5) {
            UnansMode::Inferred
        } else {
            UnansMode::Explicit
        };
        let convention = if rng.gen_bool(0.5) {
            SentenceConvention::AnswerableOnly
        } else {
            SentenceConvention::Inclusive
        };
        let mut golds = Vec::new();
        let mut preds = Vec::new();
        let mut instances = Vec::new();
        let mut records = Vec::new();
        for q in 0..k {
            let (g, p) = (rng.gen_range(0u32..64), rng.gen_range(0u32..64));
            let verdict = rng.gen_bool(0.5);
            let id = format!("q{q}");
            instances.push(instance(&id, set_from_mask(g)));
            let explicit = (unans == UnansMode::Explicit).then_some(verdict);
            records.push(prediction(&id, set_from_mask(p), explicit));
            golds.push(g);
            preds.push((p, explicit));
        }
        let opts = EvaluationOptions {
            unans_mode: unans,
            convention,
            pairing: String::new(),
        };
        let report = evaluate(&instances, &records, &opts).unwrap();

        let mut scores = Vec::new();
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (&g, &(p, explicit)) in golds.iter().zip(&preds) {
            if g != 0 {
                scores.push(oracle_prf(g, p));
            } else if convention == SentenceConvention::Inclusive {
                scores.push(if p == 0 { (1.0, 1.0, 1.0) } else { (0.0, 0.0, 0.0) });
            }
            let said_unans = explicit.unwrap_or(p == 0);
            match (g == 0, said_unans) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        let n = scores.len() as f64;
        match (&report.sentence, scores.is_empty()) {
            (None, true) => {}
            (Some(m), false) => {
                let mean = |f: fn(&(f64, f64, f64)) -> f64| scores.iter().map(f).sum::<f64>() / n;
                if !(same(m.mean.precision, mean(|s| s.0))
                    && same(m.mean.recall, mean(|s| s.1))
                    && same(m.mean.f1, mean(|s| s.2)))
                {
                    return Fail(format!("case {case}: sentence macro {:?} disagrees", m.mean));
                }
            }
            _ => return Fail(format!("case {case}: sentence score presence disagrees")),
        }
        let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let r = if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let u = &report.unanswerability;
        if !(same(u.prf.precision, p) && same(u.prf.recall, r) && same(u.prf.f1, f)) {
            return Fail(format!(
                "case {case}: unanswerability {:?} vs ({p}, {r}, {f})",
                u.prf
            ));
        }
        if u.no_predicted_positives != (tp + fp == 0.0) || u.no_gold_positives != (tp + fn_ == 0.0) {
            return Fail(format!("case {case}: degenerate-case flags disagree"));
        }
    }
    Pass(
        "all 4096 six-sentence pairs and 100000 sampled corpora agree with the confusion-matrix oracle"
            .into(),
    )
}

fn within(got: f64, want: f64, tol: f64, label: &str, errors: &mut Vec<String>) {
    if (got - want).abs() > tol {
        errors.push(format!("{label} {got:.3} (expected {want} ± {tol})"));
    }
}

fn released_corpus() -> Outcome {
    let Some(dir) = std::env::var_os("OMOSQA_DATA_DIR") else {
        return Skip("OMOSQA_DATA_DIR not set; the released corpus is not bundled".into());
    };
    let dir = Path::new(&dir);
    let load_instances = || -> Vec<QAInstance> {
        let split = dir.join("instances.split.jsonl");
        read_jsonl(if split.exists() {
            split
        } else {
            dir.join("instances.jsonl")
        })
        .unwrap()
    };
    let documents: Vec<Document> = read_jsonl(dir.join("documents.jsonl")).unwrap();
    let questions: Vec<Question> = read_jsonl(dir.join("questions.jsonl")).unwrap();
    let instances = load_instances();
    let mut errors = Vec::new();
    for kind in [StdKind::Population, StdKind::Sample] {
        let report = compute_stats(&instances, &documents, &questions, kind).unwrap();
        let all = report.cell(None, None).unwrap();
        let de = report.cell(Some("de"), None).unwrap();
        let en = report.cell(Some("en"), None).unwrap();
        let counts = [
            ("questions", all.questions, 906),
            ("de questions", de.questions, 666),
            ("en questions", en.questions, 240),
            ("no answer", all.no_answer.count, 174),
            ("contiguous", all.contiguous.count, 581),
            ("non-contiguous", all.non_contiguous.count, 151),
        ];
        for (label, got, want) in counts {
            if got != want {
                errors.push(format!("{label} {got} (expected {want})"));
            }
        }
        for (split, want) in [(Split::Train, 461), (Split::Dev, 193), (Split::Test, 252)] {
            let got = report.cell(None, Some(split)).map(|c| c.questions).unwrap_or(0);
            if got != want {
                errors.push(format!("{} questions {got} (expected {want})", split.name()));
            }
        }
        within(
            de.answer_sentences_per_question.mean,
            5.39,
            0.02,
            "de answer sentences/question",
            &mut errors,
        );
        within(
            en.answer_sentences_per_question.mean,
            4.24,
            0.02,
            "en answer sentences/question",
            &mut errors,
        );
        within(de.agreement.mean, 0.60, 0.02, "de agreement", &mut errors);
        within(
            de.agreement_extended.mean,
            0.86,
            0.02,
            "de agreement with adjacent sentences",
            &mut errors,
        );
    }
    let mut detail = "Table 1 totals and continuous fields".to_string();
    let ann_path = dir.join("annotations.jsonl");
    if ann_path.exists() {
        let records: Vec<AnnotationRecord> = read_jsonl(&ann_path).unwrap();
        let (pairs, _) = pairs_from_annotations(&records, &questions, &documents).unwrap();
        let params = selection_prior(&pairs).unwrap();
        let outcome = filter_corpus(&pairs, &params, 0.5, 3).unwrap();
        let s = &outcome.summary;
        if s.total != 1744 {
            errors.push(format!("{} double-annotated questions (expected 1744)", s.total));
        }
        within(
            s.retained_fraction * 100.0,
            51.0,
            2.0,
            "retained percent",
            &mut errors,
        );
        let test: std::collections::HashSet<&str> = instances
            .iter()
            .filter(|i| i.split == Some(Split::Test))
            .map(|i| i.question_id.as_str())
            .collect();
        let test_pairs: Vec<AnnotationPair> = pairs
            .iter()
            .filter(|p| test.contains(p.question_id.as_str()))
            .cloned()
            .collect();
        let h = human_agreement_estimate(&test_pairs, 100, 0);
        within(
            h.sentence_mean.f1 * 100.0,
            76.3,
            2.0,
            "human sentence F (test)",
            &mut errors,
        );
        detail.push_str(", retention and human agreement");
    } else {
        detail.push_str("; raw annotations absent, retention and human agreement not checked");
    }
    check(errors.is_empty(), detail, errors.join("; "))
}

fn end_to_end() -> Outcome {
    let a = fixture_copy();
    let b = fixture_copy();
    for d in [&a, &b] {
        let o = run(d.path(), &["pipeline"]);
        if code(&o) != 0 {
            return Fail(format!("pipeline failed: {}", stderr(&o)));
        }
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    if sa != sb {
        let differing: Vec<_> = sa.keys().filter(|k| sa.get(*k) != sb.get(*k)).collect();
        return Fail(format!("artifacts differ between runs: {differing:?}"));
    }
    let reports: Vec<serde_json::Value> =
        serde_json::from_slice(&sa[Path::new("reports/evaluation.json")]).unwrap();
    for r in &reports {
        for k in ["precision", "recall", "f1"] {
            if r["sentence"]["mean"][k] != 1.0 {
                return Fail(format!(
                    "{} sentence {k} = {}",
                    r["pairing"], r["sentence"]["mean"][k]
                ));
            }
        }
    }
    Pass(format!(
        "{} artifacts byte-identical across two runs; P=R=F=1 on {} pairings",
        sa.len(),
        reports.len()
    ))
}

/// Deterministic stand-in model: the answer depends only on the prompt.
fn hashing_model() -> String {
    serve(|_, _, body| {
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        let prompt = req["messages"].to_string();
        let h = prompt.bytes().fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        });
        let answer = match h % 5 {
            0 => "[]".to_string(),
            1 => format!("[{}]", h / 5 % 8),
            _ => format!("[{}, {}]", h / 5 % 8, h / 40 % 10),
        };
        (200, completion(&answer))
    })
}

const HTTP_EXTRACT: &str = "[extract]\nbackend = \"http\"\nmax_in_flight = 1\n[extract.profile]\nmodel_id = \"hash-model\"\nsupports_system_role = true\nmax_context_tokens = 100000\n";

fn cross_language_identity() -> Outcome {
    let base = hashing_model();
    let env = [("QAFORGE_MODEL_ENDPOINT", base.as_str())];
    let langs = "[\"de\", \"en\", \"ar\"]";
    let cross = fixture_copy();
    write_config(
        cross.path(),
        &format!("{HTTP_EXTRACT}[translate]\nbackend = \"identity\"\n[pairings]\ndocument_languages = {langs}\nquestion_languages = {langs}\n"),
    );
    let mono = fixture_copy();
    write_config(mono.path(), HTTP_EXTRACT);
    for (dir, stages) in [
        (&cross, &["aggregate", "translate", "extract", "evaluate"][..]),
        (&mono, &["aggregate", "extract", "evaluate"][..]),
    ] {
        for s in stages {
            let o = run_env(dir.path(), &[s], &env);
            if code(&o) != 0 {
                return Fail(format!("{s} failed: {}", stderr(&o)));
            }
        }
    }
    let load = |d: &Path| -> Vec<serde_json::Value> {
        serde_json::from_str(&std::fs::read_to_string(d.join("reports/evaluation.json")).unwrap()).unwrap()
    };
    let mut reference = load(mono.path()).remove(0);
    reference["pairing"] = serde_json::Value::Null;
    let f1 = reference["sentence"]["mean"]["f1"].as_f64().unwrap_or(0.0);
    if f1 >= 1.0 {
        return Fail("the stand-in model scored perfectly; the comparison would be vacuous".into());
    }
    let reports = load(cross.path());
    if reports.len() != 9 {
        return Fail(format!("{} pairings evaluated instead of 9", reports.len()));
    }
    let mut labels = Vec::new();
    for mut r in reports {
        let label = r["pairing"].as_str().unwrap_or_default().to_string();
        r["pairing"] = serde_json::Value::Null;
        if r != reference {
            return Fail(format!("{label} differs from the monolingual result"));
        }
        labels.push(label);
    }
    Pass(format!(
        "{} identical to monolingual (sentence F {:.3})",
        labels.join(", "),
        f1
    ))
}

#[derive(serde::Deserialize)]
struct ParserCase {
    kind: String,
    text: String,
    n_sentences: usize,
    expected: Vec<usize>,
    status: ParseStatus,
}

fn parser_robustness() -> Outcome {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../core/tests/fixtures/parser_cases.json"
    );
    let cases: Vec<ParserCase> = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let mut per_kind: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut failures = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let (got, status) = parse_answer_list(&c.text, c.n_sentences);
        let ok = got == c.expected.iter().copied().collect::<IndexSet>() && status == c.status;
        let e = per_kind.entry(c.kind.as_str()).or_default();
        e.1 += 1;
        if ok {
            e.0 += 1;
        } else {
            failures.push(format!("#{i} {:?}", c.text));
        }
    }
    let passed = cases.len() - failures.len();
    let mut kinds: Vec<_> = per_kind
        .into_iter()
        .map(|(k, (p, n))| format!("{k} {p}/{n}"))
        .collect();
    kinds.sort();
    check(
        failures.is_empty() && cases.len() == 40,
        format!("{passed}/{} ({})", cases.len(), kinds.join(", ")),
        format!("{passed}/{}; failing: {}", cases.len(), failures.join(", ")),
    )
}

fn live_mode() -> Outcome {
    let (Ok(config), Ok(_)) = (
        std::env::var("QAFORGE_LIVE_CONFIG"),
        std::env::var("QAFORGE_MODEL_ENDPOINT"),
    ) else {
        return Skip("set QAFORGE_LIVE_CONFIG and QAFORGE_MODEL_ENDPOINT to run against a real model".into());
    };
    let cfg_path = Path::new(&config);
    let text = std::fs::read_to_string(cfg_path).unwrap();
    let cfg: PipelineConfig = toml::from_str(&text).unwrap();
    for stage in [&["extract"][..], &["evaluate", "--partition", "test"][..]] {
        let o = bin().arg("--config").arg(cfg_path).args(stage).output().unwrap();
        if code(&o) != 0 {
            return Fail(format!("{} failed: {}", stage[0], stderr(&o)));
        }
    }
    let reports_dir = cfg_path
        .parent()
        .unwrap()
        .join(&cfg.paths.work_dir)
        .join(&cfg.paths.reports);
    let reports: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(reports_dir.join("evaluation.json")).unwrap()).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for r in &reports {
        let p = r["sentence"]["mean"]["precision"].as_f64().unwrap_or(0.0);
        let rec = r["sentence"]["mean"]["recall"].as_f64().unwrap_or(0.0);
        ok &= p > rec && p >= 0.65;
        notes.push(format!(
            "{} {}: P {:.3} R {:.3}",
            r["system_id"], r["pairing"], p, rec
        ));
    }
    check(
        ok,
        notes.join("; "),
        format!("expected P > R and P >= 0.65: {}", notes.join("; ")),
    )
}
