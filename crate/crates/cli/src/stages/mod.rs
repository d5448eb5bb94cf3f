//! One function per pipeline stage. Stages read their inputs from the
//! configured artifact paths, write outputs and a manifest, and report
//! failures with the exit code class they belong to.

mod annotate;
mod build;
mod evaluate;
mod extract;
mod gold;
mod translate;

use std::fs;
use std::path::{Path, PathBuf};

use qaforge_core::corpus::{read_jsonl, write_jsonl, QAInstance, Split};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::cli::{Cli, Stage};
use crate::config::Loaded;
use crate::error::{require, Classify, ExitKind, Failure, StageResult};
use crate::manifest::{self, ManifestBuilder};

pub use extract::{pairing_tag, PREDICTION_INDEX};

/// Shared state for one invocation.
pub struct Ctx {
    pub loaded: Loaded,
}

impl Ctx {
    pub fn config(&self) -> &crate::config::PipelineConfig {
        &self.loaded.config
    }

    pub fn work_dir(&self) -> &Path {
        &self.loaded.work_dir
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.loaded.resolve(p)
    }

    /// A path given on the command line wins over the configured one.
    pub fn pick(&self, flag: &Option<PathBuf>, configured: &Path) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.path(configured))
    }

    pub fn reports_dir(&self) -> StageResult<PathBuf> {
        let dir = self.path(&self.config().paths.reports);
        fs::create_dir_all(&dir).data()?;
        Ok(dir)
    }

    pub fn manifest(&self, stage: &str, settings: serde_json::Value) -> ManifestBuilder {
        ManifestBuilder::new(
            stage,
            self.work_dir(),
            &self.path(&self.config().paths.manifests),
            settings,
        )
    }

    /// Instances for downstream stages: the split-labelled file when
    /// `split` has run, the aggregated one otherwise.
    pub fn eval_instances_path(&self) -> PathBuf {
        let split = self.path(&self.config().paths.split_instances);
        if split.exists() {
            split
        } else {
            self.path(&self.config().paths.instances)
        }
    }
}

pub fn read<T: DeserializeOwned>(stage: &str, path: &Path, hint: &str) -> StageResult<Vec<T>> {
    require(stage, path, hint)?;
    read_jsonl(path).data()
}

pub fn write<T: Serialize>(path: &Path, records: &[T]) -> StageResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).data()?;
    }
    write_jsonl(path, records).data()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> StageResult<()> {
    let mut text = serde_json::to_string_pretty(value).data()?;
    text.push('\n');
    fs::write(path, text).data()
}

pub fn write_text(path: &Path, text: &str) -> StageResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).data()?;
    }
    fs::write(path, text).data()
}

/// Keeps the instances of one partition; all of them when `partition` is `None`.
pub fn select_partition(
    stage: &str,
    instances: Vec<QAInstance>,
    partition: Option<Split>,
) -> StageResult<Vec<QAInstance>> {
    let Some(p) = partition else {
        return Ok(instances);
    };
    if instances.iter().any(|i| i.split.is_none()) {
        return Err(Failure::data(format!(
            "{stage}: partition {} requested but instances carry no split labels (run split first)",
            p.name()
        )));
    }
    Ok(instances.into_iter().filter(|i| i.split == Some(p)).collect())
}

pub const HINT_DOCUMENTS: &str = "run ingest first";
pub const HINT_QUESTIONS: &str = "run review first";
pub const HINT_ANNOTATIONS: &str = "run export or provide annotations";
pub const HINT_INSTANCES: &str = "run aggregate first";
pub const HINT_TRANSLATIONS: &str = "run translate first";
pub const HINT_PREDICTIONS: &str = "run extract first";

pub fn dispatch(cli: Cli) -> StageResult<()> {
    let loaded = Loaded::load(cli.config.as_deref(), cli.work_dir.as_deref()).map_err(|error| Failure {
        kind: ExitKind::Usage,
        error,
    })?;
    let ctx = Ctx { loaded };
    run_stage(&ctx, cli.stage)
}

pub fn run_stage(ctx: &Ctx, stage: Stage) -> StageResult<()> {
    match stage {
        Stage::Ingest(a) => build::ingest(ctx, a),
        Stage::Qgen(a) => build::qgen(ctx, a),
        Stage::Review(a) => build::review(ctx, a),
        Stage::Serve(a) => annotate::serve(ctx, a),
        Stage::Export(a) => annotate::export(ctx, a),
        Stage::Aggregate(a) => gold::aggregate(ctx, a),
        Stage::Stats(a) => gold::stats(ctx, a),
        Stage::Split(a) => gold::split(ctx, a),
        Stage::HumanAgreement(a) => gold::human_agreement(ctx, a),
        Stage::Translate(a) => translate::translate(ctx, a),
        Stage::Extract(a) => extract::extract(ctx, a),
        Stage::ExportClassifier(a) => extract::export_classifier(ctx, a),
        Stage::Evaluate(a) => evaluate::evaluate(ctx, a),
        Stage::Pipeline => pipeline(ctx),
        Stage::Verify => verify(ctx),
    }
}

fn pipeline(ctx: &Ctx) -> StageResult<()> {
    let names = ctx.config().pipeline.stages.clone();
    if names.is_empty() {
        return Err(Failure::usage("[pipeline].stages is empty"));
    }
    for name in &names {
        let stage = default_stage(name)?;
        log::info!("stage {name}");
        run_stage(ctx, stage)?;
    }
    Ok(())
}

/// The stage called `name` with every flag left at its configured value.
fn default_stage(name: &str) -> StageResult<Stage> {
    use clap::Parser;
    if matches!(name, "serve" | "pipeline" | "verify") {
        return Err(Failure::usage(format!("{name} cannot run inside a pipeline")));
    }
    Cli::try_parse_from(["qa-forge", name])
        .map(|c| c.stage)
        .map_err(|_| Failure::usage(format!("unknown stage {name:?} in [pipeline].stages")))
}

fn verify(ctx: &Ctx) -> StageResult<()> {
    let dir = ctx.path(&ctx.config().paths.manifests);
    let problems = manifest::verify(ctx.work_dir(), &dir).data()?;
    if problems.is_empty() {
        let n = manifest::load_all(&dir).data()?.len();
        println!("{n} manifests verified");
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(Failure::data(format!("{} manifest problems", problems.len())))
    }
}
