use std::collections::HashSet;
use std::path::{Path, PathBuf};

use qaforge_core::corpus::{PredictionRecord, QAInstance, Question};
use qaforge_core::evaluation::{evaluate as score, render_report, EvaluationOptions, ReportFormat};
use serde_json::json;

use super::extract::PredictionFile;
use super::{
    read, select_partition, write_json, write_text, Ctx, HINT_INSTANCES, HINT_PREDICTIONS, HINT_QUESTIONS,
    PREDICTION_INDEX,
};
use crate::cli::EvaluateArgs;
use crate::error::{require, Classify, Failure, StageResult};

fn read_index(dir: &Path) -> StageResult<Vec<PredictionFile>> {
    let p = dir.join(PREDICTION_INDEX);
    require("evaluate", &p, HINT_PREDICTIONS)?;
    let text = std::fs::read_to_string(&p).data()?;
    serde_json::from_str(&text).data()
}

/// Prediction files with their index entries. Explicit files take the
/// entry recorded in a sibling index, or are labelled by their file stem.
fn prediction_files(ctx: &Ctx, explicit: &[PathBuf]) -> StageResult<Vec<(PredictionFile, PathBuf)>> {
    if explicit.is_empty() {
        let dir = ctx.path(&ctx.config().paths.predictions);
        return Ok(read_index(&dir)?
            .into_iter()
            .map(|f| {
                let p = dir.join(&f.file);
                (f, p)
            })
            .collect());
    }
    let mut out = Vec::new();
    for p in explicit {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let sibling = p.parent().map(|d| d.join(PREDICTION_INDEX));
        let indexed = match sibling.filter(|s| s.exists()) {
            Some(_) => read_index(p.parent().unwrap())?
                .into_iter()
                .find(|f| f.file == name),
            None => None,
        };
        let entry = indexed.unwrap_or_else(|| PredictionFile {
            pairing: p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string(),
            file: name.to_string(),
            system_id: String::new(),
            original_language: None,
        });
        out.push((entry, p.clone()));
    }
    Ok(out)
}

pub fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> StageResult<()> {
    let cfg = &ctx.config().evaluate;
    let unans = args.unans.unwrap_or(cfg.unans);
    let format = args.format.unwrap_or(cfg.format);
    let by_answers = args.by_answers || cfg.by_answers;
    let partition = args.partition.or(cfg.partition);

    let gold_path = args.gold.clone().unwrap_or_else(|| ctx.eval_instances_path());
    let instances: Vec<QAInstance> = read("evaluate", &gold_path, HINT_INSTANCES)?;
    let instances = select_partition("evaluate", instances, partition)?;
    if instances.is_empty() {
        return Err(Failure::data("evaluate: no gold instances selected"));
    }

    let files = prediction_files(ctx, &args.predictions)?;
    let q_path = ctx.path(&ctx.config().paths.questions);
    let questions: Vec<Question> = if files.iter().any(|(f, _)| f.original_language.is_some()) {
        read("evaluate", &q_path, HINT_QUESTIONS)?
    } else {
        Vec::new()
    };
    let mut reports = Vec::with_capacity(files.len());
    for (entry, path) in &files {
        let gold: Vec<QAInstance> = match &entry.original_language {
            Some(code) => {
                let own: HashSet<&str> = questions
                    .iter()
                    .filter(|q| q.original_language.code() == code && q.language.code() == code)
                    .map(|q| q.id.as_str())
                    .collect();
                instances
                    .iter()
                    .filter(|i| own.contains(i.question_id.as_str()))
                    .cloned()
                    .collect()
            }
            None => instances.clone(),
        };
        let ids: HashSet<&str> = gold.iter().map(|i| i.question_id.as_str()).collect();
        let preds: Vec<PredictionRecord> = read("evaluate", path, HINT_PREDICTIONS)?;
        let preds: Vec<PredictionRecord> = preds
            .into_iter()
            .filter(|p| ids.contains(p.question_id.as_str()))
            .collect();
        let opts = EvaluationOptions {
            unans_mode: unans,
            convention: cfg.convention,
            pairing: entry.pairing.clone(),
        };
        let report = score(&gold, &preds, &opts)
            .map_err(|e| Failure::data(format!("evaluate {}: {e}", path.display())))?;
        reports.push(report);
    }

    let out_dir = match &args.out {
        Some(d) => d.clone(),
        None => ctx.reports_dir()?,
    };
    let md = out_dir.join("evaluation.md");
    let csv = out_dir.join("evaluation.csv");
    let js = out_dir.join("evaluation.json");
    write_text(&md, &render_report(&reports, ReportFormat::Markdown, by_answers))?;
    write_text(&csv, &render_report(&reports, ReportFormat::Csv, by_answers))?;
    write_json(&js, &reports)?;
    print!("{}", render_report(&reports, format, by_answers));

    let mut m = ctx.manifest(
        "evaluate",
        json!({"unans": unans, "convention": cfg.convention, "by_answers": by_answers, "partition": partition}),
    );
    m.input("instances", &gold_path).data()?;
    if !questions.is_empty() {
        m.input("questions", &q_path).data()?;
    }
    for (_, p) in &files {
        m.input("predictions", p).data()?;
    }
    m.output("report_md", &md).data()?;
    m.output("report_csv", &csv).data()?;
    m.output("report_json", &js).data()?;
    m.write().data()?;
    Ok(())
}
