use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qaforge_core::agreement::stats::StdKind;
use qaforge_core::corpus::Split;
use qaforge_core::evaluation::ReportFormat;
use qaforge_core::extraction::{ShotMode, UnansMode};

use crate::config::{ModelBackend, StrategyChoice, TranslatorBackend};

#[derive(Debug, Parser)]
#[command(
    name = "qa-forge",
    version,
    about = "Build and evaluate sentence-extractive QA corpora"
)]
pub struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding the artifacts; overrides `paths.work_dir`.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub stage: Stage,
}

#[derive(Debug, Subcommand)]
pub enum Stage {
    /// Fetch pages and segment them into documents.
    Ingest(IngestArgs),
    /// Generate candidate questions with a chat model.
    Qgen(QgenArgs),
    /// Apply review actions to generated questions, or list pending ones.
    Review(ReviewArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Dump annotations from the service store.
    Export(ExportArgs),
    /// Pair double annotations, extend, filter and write gold instances.
    Aggregate(AggregateArgs),
    /// Corpus statistics table.
    Stats(StatsArgs),
    /// Assign document-disjoint train/dev/test splits.
    Split(SplitArgs),
    /// Translate documents and questions sentence by sentence.
    Translate(TranslateArgs),
    /// Prompt a model for answer sentence ids.
    Extract(ExtractArgs),
    /// Write sentence-classifier training examples.
    ExportClassifier(ClassifierArgs),
    /// Score predictions against gold instances.
    Evaluate(EvaluateArgs),
    /// Estimate human agreement from the double annotations.
    HumanAgreement(HumanAgreementArgs),
    /// Run the stages listed under `[pipeline]` in order.
    Pipeline,
    /// Check every manifest against the artifacts on disk.
    Verify,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Pages API base URL, e.g. `https://cms.example.org/api/augsburg`.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Language to fetch; repeatable.
    #[arg(long = "language")]
    pub languages: Vec<String>,
    /// Documents file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QgenArgs {
    /// Prompt strategy per document.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyChoice>,
    /// Questions per document.
    #[arg(long)]
    pub n: Option<usize>,
    /// Model id sent to the chat endpoint.
    #[arg(long)]
    pub model: Option<String>,
    /// Documents file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Generated questions file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Generated questions.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Review actions (JSONL).
    #[arg(long)]
    pub actions: Option<PathBuf>,
    /// Reviewed questions file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print questions still awaiting review and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address, e.g. `127.0.0.1:8080`.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Annotations file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Annotation records (JSONL).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Documents file.
    #[arg(long)]
    pub documents: Option<PathBuf>,
    /// Reviewed questions file.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Minimum Jaccard after extension for a question to be kept.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Furthest a single-annotator sentence may lie from an agreed one.
    #[arg(long)]
    pub max_distance: Option<usize>,
    /// Gold instances file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Gold instances; the split file when present.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// `markdown` or `csv`.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
    /// `population` or `sample` standard deviation.
    #[arg(long, value_parser = parse_std)]
    pub std: Option<StdKind>,
    /// Report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Seed for the restarts.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train, dev and test shares, e.g. `0.51,0.21,0.28`.
    #[arg(long, value_parser = parse_ratios)]
    pub ratios: Option<[f64; 3]>,
    /// Gold instances.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Split-labelled instances.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Target language; repeatable.
    #[arg(long = "target")]
    pub targets: Vec<String>,
    /// Translation backend.
    #[arg(long, value_enum)]
    pub backend: Option<TranslatorBackend>,
    /// Documents file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Model id; also the system id unless configured.
    #[arg(long)]
    pub model: Option<String>,
    /// `http` for a chat endpoint, `echo` to answer with gold.
    #[arg(long, value_enum)]
    pub backend: Option<ModelBackend>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ShotMode>,
    /// `inferred` (empty list) or `explicit` (verdict line).
    #[arg(long, value_parser = parse_unans)]
    pub unans: Option<UnansMode>,
    /// Instances to run on.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Directory for prediction files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifierArgs {
    /// Context sentences on each side of the target.
    #[arg(long)]
    pub window: Option<usize>,
    /// Gold instances.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Examples file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold instances; the split file when present.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Prediction file; repeatable. Defaults to the files `extract` wrote.
    #[arg(long = "pred")]
    pub predictions: Vec<PathBuf>,
    /// How unanswerability is read from predictions.
    #[arg(long, value_parser = parse_unans)]
    pub unans: Option<UnansMode>,
    /// Add the breakdown by number of gold sentences.
    #[arg(long)]
    pub by_answers: bool,
    /// Format printed to stdout; both are written.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ReportFormat>,
    /// Only score `train`, `dev` or `test`.
    #[arg(long, value_parser = parse_split)]
    pub partition: Option<Split>,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HumanAgreementArgs {
    /// Annotation records (JSONL).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Number of random gold/system assignments.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Only questions of this split.
    #[arg(long, value_parser = parse_split)]
    pub partition: Option<Split>,
    /// Use every double-annotated question, not only retained ones.
    #[arg(long)]
    pub all_pairs: bool,
}

fn parse_json_str<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    parse_json_str(s)
}

fn parse_std(s: &str) -> Result<StdKind, String> {
    parse_json_str(s)
}

fn parse_mode(s: &str) -> Result<ShotMode, String> {
    parse_json_str(s)
}

fn parse_unans(s: &str) -> Result<UnansMode, String> {
    parse_json_str(s)
}

fn parse_split(s: &str) -> Result<Split, String> {
    parse_json_str(s)
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected three ratios, got {}", v.len()))
}
