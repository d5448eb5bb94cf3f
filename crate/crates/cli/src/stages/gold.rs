use std::collections::HashSet;

use qaforge_core::agreement::split::{split_corpus, SplitConfig};
use qaforge_core::agreement::stats::{compute_stats, render_csv, render_markdown};
use qaforge_core::agreement::{filter_corpus, pairs_from_annotations, selection_prior};
use qaforge_core::corpus::{AnnotationRecord, Document, QAInstance, Question};
use qaforge_core::evaluation::{human_agreement_estimate, ReportFormat};
use serde_json::json;

use super::{
    read, select_partition, write, write_json, write_text, Ctx, HINT_ANNOTATIONS, HINT_DOCUMENTS,
    HINT_INSTANCES, HINT_QUESTIONS,
};
use crate::cli::{AggregateArgs, HumanAgreementArgs, SplitArgs, StatsArgs};
use crate::error::{Classify, Failure, StageResult};

pub fn aggregate(ctx: &Ctx, args: AggregateArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().aggregate;
    let threshold = args.threshold.unwrap_or(cfg.threshold);
    let max_distance = args.max_distance.unwrap_or(cfg.max_distance);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::usage(format!("threshold {threshold} outside [0, 1]")));
    }

    let ann_path = ctx.pick(&args.annotations, &paths.annotations);
    let doc_path = ctx.pick(&args.documents, &paths.documents);
    let q_path = ctx.pick(&args.questions, &paths.questions);
    let records: Vec<AnnotationRecord> = read("aggregate", &ann_path, HINT_ANNOTATIONS)?;
    let documents: Vec<Document> = read("aggregate", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("aggregate", &q_path, HINT_QUESTIONS)?;

    let (pairs, pairing) = pairs_from_annotations(&records, &questions, &documents).data()?;
    let params = selection_prior(&pairs).data()?;
    let outcome = filter_corpus(&pairs, &params, threshold, max_distance).data()?;

    let out = ctx.pick(&args.out, &paths.instances);
    write(&out, &outcome.instances)?;
    let summary_path = ctx.reports_dir()?.join("aggregate.json");
    write_json(
        &summary_path,
        &json!({"pairing": pairing, "filter": outcome.summary}),
    )?;

    let s = &outcome.summary;
    println!(
        "retained {} of {} double-annotated questions ({:.1}%); selection prior {:.4}, expected agreement {:.4}",
        s.retained,
        s.total,
        s.retained_fraction * 100.0,
        s.params.selection_prior,
        s.params.expected_agreement
    );
    println!(
        "mean agreement over all pairs: raw {:.2}, extended {:.2} (chance-corrected {:.2} / {:.2})",
        s.all.raw, s.all.extended, s.all.raw_chance_corrected, s.all.extended_chance_corrected
    );

    let mut m = ctx.manifest(
        "aggregate",
        json!({"threshold": threshold, "max_distance": max_distance}),
    );
    m.input("annotations", &ann_path).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    m.output("instances", &out).data()?;
    m.output("aggregate_summary", &summary_path).data()?;
    m.write().data()?;
    Ok(())
}

pub fn stats(ctx: &Ctx, args: StatsArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().stats;
    let format = args.format.unwrap_or(cfg.format);
    let std = args.std.unwrap_or(cfg.std);
    let inst_path = args
        .instances
        .clone()
        .unwrap_or_else(|| ctx.eval_instances_path());
    let instances: Vec<QAInstance> = read("stats", &inst_path, HINT_INSTANCES)?;
    let doc_path = ctx.path(&paths.documents);
    let q_path = ctx.path(&paths.questions);
    let documents: Vec<Document> = read("stats", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("stats", &q_path, HINT_QUESTIONS)?;

    let report = compute_stats(&instances, &documents, &questions, std).data()?;
    let (text, ext) = match format {
        ReportFormat::Markdown => (render_markdown(&report), "md"),
        ReportFormat::Csv => (render_csv(&report), "csv"),
    };
    let out = match args.out {
        Some(p) => p,
        None => ctx.reports_dir()?.join(format!("stats.{ext}")),
    };
    write_text(&out, &text)?;
    let json_path = ctx.reports_dir()?.join("stats.json");
    write_json(&json_path, &report)?;
    print!("{text}");

    let mut m = ctx.manifest("stats", json!({"format": format, "std": std}));
    m.input("instances", &inst_path).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    m.output("stats", &out).data()?;
    m.output("stats_json", &json_path).data()?;
    m.write().data()?;
    Ok(())
}

pub fn split(ctx: &Ctx, args: SplitArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().split;
    let seed = args.seed.unwrap_or(ctx.config().seeds.split);
    let split_cfg = SplitConfig {
        ratios: args.ratios.unwrap_or(cfg.ratios),
        seed,
        restarts: cfg.restarts,
        tolerance: cfg.tolerance,
        ..SplitConfig::default()
    };
    let input = ctx.pick(&args.input, &paths.instances);
    let instances: Vec<QAInstance> = read("split", &input, HINT_INSTANCES)?;
    let doc_path = ctx.path(&paths.documents);
    let q_path = ctx.path(&paths.questions);
    let documents: Vec<Document> = read("split", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("split", &q_path, HINT_QUESTIONS)?;

    let outcome = split_corpus(&instances, &questions, &documents, &split_cfg).map_err(Failure::usage)?;
    for w in &outcome.warnings {
        log::warn!("{w}");
    }
    let out = ctx.pick(&args.out, &paths.split_instances);
    write(&out, &outcome.instances)?;
    let summary_path = ctx.reports_dir()?.join("split.json");
    write_json(
        &summary_path,
        &json!({"sizes": {"train": outcome.sizes[0], "dev": outcome.sizes[1], "test": outcome.sizes[2]},
                "divergence": outcome.divergence, "warnings": outcome.warnings}),
    )?;
    println!(
        "train {} / dev {} / test {} questions (divergence {:.4})",
        outcome.sizes[0], outcome.sizes[1], outcome.sizes[2], outcome.divergence
    );

    let mut m = ctx.manifest(
        "split",
        json!({"ratios": split_cfg.ratios, "restarts": split_cfg.restarts, "tolerance": split_cfg.tolerance,
               "strata": split_cfg.strata}),
    );
    m.seed("split", seed);
    m.input("instances", &input).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    m.output("split_instances", &out).data()?;
    m.output("split_summary", &summary_path).data()?;
    m.write().data()?;
    Ok(())
}

pub fn human_agreement(ctx: &Ctx, args: HumanAgreementArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().human_agreement;
    let seeds = args.seeds.unwrap_or(cfg.seeds);
    let partition = args.partition.or(cfg.partition);
    let retained_only = cfg.retained_only && !args.all_pairs;
    let base_seed = ctx.config().seeds.human_agreement;

    let ann_path = ctx.pick(&args.annotations, &paths.annotations);
    let doc_path = ctx.path(&paths.documents);
    let q_path = ctx.path(&paths.questions);
    let records: Vec<AnnotationRecord> = read("human-agreement", &ann_path, HINT_ANNOTATIONS)?;
    let documents: Vec<Document> = read("human-agreement", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("human-agreement", &q_path, HINT_QUESTIONS)?;
    let (mut pairs, _) = pairs_from_annotations(&records, &questions, &documents).data()?;

    let mut inst_path = None;
    if retained_only || partition.is_some() {
        let p = ctx.eval_instances_path();
        let instances: Vec<QAInstance> = read("human-agreement", &p, HINT_INSTANCES)?;
        let instances = select_partition("human-agreement", instances, partition)?;
        let keep: HashSet<&str> = instances.iter().map(|i| i.question_id.as_str()).collect();
        pairs.retain(|pair| keep.contains(pair.question_id.as_str()));
        inst_path = Some(p);
    }
    if pairs.is_empty() {
        return Err(Failure::data(
            "human-agreement: no double-annotated questions selected",
        ));
    }
    let estimate = human_agreement_estimate(&pairs, seeds, base_seed);
    let out = ctx.reports_dir()?.join("human_agreement.json");
    write_json(&out, &estimate)?;
    let s = &estimate.sentence_mean;
    let u = &estimate.unanswerability_mean;
    println!(
        "human agreement over {} questions, {} seeds: sentence P {:.1} R {:.1} F {:.1} (sd {:.1}); unanswerable P {:.1} R {:.1} F {:.1}",
        estimate.questions,
        estimate.seeds,
        s.precision * 100.0,
        s.recall * 100.0,
        s.f1 * 100.0,
        estimate.sentence_std.f1 * 100.0,
        u.precision * 100.0,
        u.recall * 100.0,
        u.f1 * 100.0
    );

    let mut m = ctx.manifest(
        "human-agreement",
        json!({"seeds": seeds, "partition": partition, "retained_only": retained_only}),
    );
    m.seed("human_agreement", base_seed);
    m.input("annotations", &ann_path).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    if let Some(p) = inst_path {
        m.input("instances", &p).data()?;
    }
    m.output("human_agreement", &out).data()?;
    m.write().data()?;
    Ok(())
}
