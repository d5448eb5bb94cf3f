use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{EvaluationReport, PRF};
use crate::corpus::Setting;
use crate::extraction::UnansMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[serde(alias = "md")]
    Markdown,
    Csv,
}

/// Percentage with one decimal. Both formats go through here.
fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

fn setting_name(s: Option<Setting>) -> &'static str {
    match s {
        Some(Setting::ZeroShot) => "0-shot",
        Some(Setting::FiveShot) => "5-shot",
        Some(Setting::External) => "external",
        None => "-",
    }
}

fn unans_name(m: UnansMode) -> &'static str {
    match m {
        UnansMode::Inferred => "inferred",
        UnansMode::Explicit => "explicit",
    }
}

fn pairing(r: &EvaluationReport) -> &str {
    if r.pairing.is_empty() {
        "-"
    } else {
        &r.pairing
    }
}

fn prf_cells(p: Option<&PRF>) -> [String; 3] {
    match p {
        Some(p) => [pct(p.precision), pct(p.recall), pct(p.f1)],
        None => ["-".into(), "-".into(), "-".into()],
    }
}

/// Renders a results table (one row per report), the per-gold-size
/// breakdown when `by_answers` is set, and footnotes.
pub fn render_report(reports: &[EvaluationReport], format: ReportFormat, by_answers: bool) -> String {
    match format {
        ReportFormat::Markdown => markdown(reports, by_answers),
        ReportFormat::Csv => csv(reports, by_answers),
    }
}

fn markdown(reports: &[EvaluationReport], by_answers: bool) -> String {
    let mut out = String::new();
    out.push_str("| System | Pairing | Setting | Unans. | n | Sent. P | Sent. R | Sent. F | Sent. F sd | Unans. P | Unans. R | Unans. F |\n");
    out.push_str("|---|---|---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    let mut notes = Vec::new();
    for r in reports {
        let [sp, sr, sf] = prf_cells(r.sentence.as_ref().map(|m| &m.mean));
        let sd = r.sentence.map_or("-".to_string(), |m| pct(m.std.f1));
        let u = &r.unanswerability;
        let mark = |flag: bool, sym: &'static str| if flag { sym } else { "" };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {sp} | {sr} | {sf} | {sd} | {}{} | {}{} | {} |",
            r.system_id,
            pairing(r),
            setting_name(r.setting),
            unans_name(r.unans_mode),
            r.questions,
            pct(u.prf.precision),
            mark(u.no_predicted_positives, "†"),
            pct(u.prf.recall),
            mark(u.no_gold_positives, "‡"),
            pct(u.prf.f1),
        );
        if r.failed_parses > 0 {
            notes.push(format!(
                "{} ({}): {} of {} responses could not be parsed and were scored as empty predictions.",
                r.system_id,
                pairing(r),
                r.failed_parses,
                r.questions
            ));
        }
    }
    if reports.iter().any(|r| r.unanswerability.no_predicted_positives) {
        notes.push("† no question was predicted unanswerable; precision reported as 0.".into());
    }
    if reports.iter().any(|r| r.unanswerability.no_gold_positives) {
        notes.push("‡ no gold question is unanswerable; recall reported as 100.".into());
    }
    if by_answers {
        out.push_str("\n| System | Pairing | Setting | #gold | n | P | R | F |\n");
        out.push_str("|---|---|---|---:|---:|---:|---:|---:|\n");
        for r in reports {
            for b in &r.by_answer_count {
                let [p, rc, f] = prf_cells(Some(&b.mean));
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {p} | {rc} | {f} |",
                    r.system_id,
                    pairing(r),
                    setting_name(r.setting),
                    b.gold_size,
                    b.n
                );
            }
        }
    }
    if !notes.is_empty() {
        out.push('\n');
        for n in notes {
            let _ = writeln!(out, "{n}");
        }
    }
    out
}

fn csv(reports: &[EvaluationReport], by_answers: bool) -> String {
    let mut out = String::from("system,pairing,setting,unans_mode,section,gold_size,metric,value\n");
    let mut row = |r: &EvaluationReport, section: &str, gold: &str, metric: &str, value: String| {
        let _ = writeln!(
            out,
            "{},{},{},{},{section},{gold},{metric},{value}",
            csv_field(&r.system_id),
            csv_field(pairing(r)),
            setting_name(r.setting),
            unans_name(r.unans_mode)
        );
    };
    for r in reports {
        row(r, "all", "", "questions", r.questions.to_string());
        row(r, "all", "", "failed_parses", r.failed_parses.to_string());
        let [p, rc, f] = prf_cells(r.sentence.as_ref().map(|m| &m.mean));
        row(r, "sentence", "", "precision", p);
        row(r, "sentence", "", "recall", rc);
        row(r, "sentence", "", "f1", f);
        row(
            r,
            "sentence",
            "",
            "f1_sd",
            r.sentence.map_or("-".to_string(), |m| pct(m.std.f1)),
        );
        let u = &r.unanswerability;
        row(r, "unanswerability", "", "precision", pct(u.prf.precision));
        row(r, "unanswerability", "", "recall", pct(u.prf.recall));
        row(r, "unanswerability", "", "f1", pct(u.prf.f1));
        row(
            r,
            "unanswerability",
            "",
            "no_predicted_positives",
            u.no_predicted_positives.to_string(),
        );
        row(
            r,
            "unanswerability",
            "",
            "no_gold_positives",
            u.no_gold_positives.to_string(),
        );
        if by_answers {
            for b in &r.by_answer_count {
                let g = b.gold_size.to_string();
                row(r, "by_answers", &g, "n", b.n.to_string());
                let [p, rc, f] = prf_cells(Some(&b.mean));
                row(r, "by_answers", &g, "precision", p);
                row(r, "by_answers", &g, "recall", rc);
                row(r, "by_answers", &g, "f1", f);
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
