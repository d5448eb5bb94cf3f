//! Pipeline configuration file.
//!
//! Every knob that changes results lives here so that run manifests can
//! record it. Relative paths resolve against `paths.work_dir`, which in turn
//! resolves against the directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use qaforge_core::agreement::split::{DEFAULT_RATIOS, DEFAULT_RESTARTS};
use qaforge_core::agreement::stats::StdKind;
use qaforge_core::agreement::{DEFAULT_MAX_DISTANCE, DEFAULT_THRESHOLD};
use qaforge_core::corpus::Split;
use qaforge_core::evaluation::{ReportFormat, SentenceConvention, DEFAULT_AGREEMENT_SEEDS};
use qaforge_core::extraction::{ModelProfile, ShotMode, UnansMode, DEFAULT_WINDOW};
use qaforge_service::ServiceConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seeds: Seeds,
    pub ingest: IngestConfig,
    pub qgen: QgenConfig,
    pub aggregate: AggregateConfig,
    pub stats: StatsConfig,
    pub split: SplitSection,
    pub translate: TranslateConfig,
    pub pairings: PairingsConfig,
    pub extract: ExtractConfig,
    pub classifier: ClassifierConfig,
    pub evaluate: EvaluateConfig,
    pub human_agreement: HumanAgreementConfig,
    pub service: ServiceConfig,
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub documents: PathBuf,
    /// Output of `qgen`, input of `review`.
    pub generated_questions: PathBuf,
    /// Review actions applied by `review`, one JSON object per line.
    pub reviews: PathBuf,
    /// Reviewed questions; what annotation and everything after it use.
    pub questions: PathBuf,
    pub annotations: PathBuf,
    pub instances: PathBuf,
    pub split_instances: PathBuf,
    pub translations: PathBuf,
    pub predictions: PathBuf,
    pub classifier_examples: PathBuf,
    pub reports: PathBuf,
    pub manifests: PathBuf,
    /// Directory overriding the bundled prompt templates.
    pub templates: Option<PathBuf>,
    /// Few-shot bank replacing the bundled English one.
    pub fewshot_bank: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: ".".into(),
            documents: "documents.jsonl".into(),
            generated_questions: "questions.generated.jsonl".into(),
            reviews: "reviews.jsonl".into(),
            questions: "questions.jsonl".into(),
            annotations: "annotations.jsonl".into(),
            instances: "instances.jsonl".into(),
            split_instances: "instances.split.jsonl".into(),
            translations: "translations".into(),
            predictions: "predictions".into(),
            classifier_examples: "classifier_examples.jsonl".into(),
            reports: "reports".into(),
            manifests: "manifests".into(),
            templates: None,
            fewshot_bank: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub qgen: u64,
    pub split: u64,
    pub human_agreement: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub endpoint: Option<String>,
    pub languages: Vec<String>,
    pub source_region: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            endpoint: None,
            languages: vec!["de".into(), "en".into()],
            source_region: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    /// Three-word summary for a seeded 60% of documents, full text otherwise.
    Mixed,
    Summary,
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QgenConfig {
    pub model: String,
    pub temperature: f64,
    pub questions_per_document: usize,
    pub strategy: StrategyChoice,
}

impl Default for QgenConfig {
    fn default() -> Self {
        QgenConfig {
            model: "gpt-4".into(),
            temperature: 0.75,
            questions_per_document: 3,
            strategy: StrategyChoice::Mixed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregateConfig {
    pub threshold: f64,
    pub max_distance: usize,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            threshold: DEFAULT_THRESHOLD,
            max_distance: DEFAULT_MAX_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub format: ReportFormat,
    pub std: StdKind,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            format: ReportFormat::Markdown,
            std: StdKind::Population,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: [f64; 3],
    pub restarts: usize,
    pub tolerance: Option<usize>,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            ratios: DEFAULT_RATIOS,
            restarts: DEFAULT_RESTARTS,
            tolerance: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TranslatorBackend {
    Identity,
    Tagging,
    Http,
    Replay,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslateConfig {
    pub backend: TranslatorBackend,
    /// Target languages in addition to those the pairings need.
    pub targets: Vec<String>,
    /// Translation cache; also where `replay` reads from.
    pub cache_dir: Option<PathBuf>,
    /// Backend whose recorded translations `replay` serves.
    pub replay_backend: String,
}

impl Default for TranslateConfig {
    fn default() -> Self {
        TranslateConfig {
            backend: TranslatorBackend::Identity,
            targets: Vec::new(),
            cache_dir: None,
            replay_backend: "http".into(),
        }
    }
}

/// Language pairings evaluated by `extract` and `evaluate`. With no
/// languages configured, questions are paired with their documents in the
/// original language only.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingsConfig {
    pub document_languages: Vec<String>,
    pub question_languages: Vec<String>,
    /// Pivots for round-trip question translation.
    pub retranslation_pivots: Vec<String>,
    /// Language whose questions are round-tripped and paired with its documents.
    pub retranslation_language: Option<String>,
}

impl PairingsConfig {
    pub fn is_monolingual(&self) -> bool {
        self.document_languages.is_empty()
            && self.question_languages.is_empty()
            && self.retranslation_pivots.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelBackend {
    /// Chat-completions endpoint from the environment.
    Http,
    /// Answers every question with its gold sentences.
    Echo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub backend: ModelBackend,
    pub system_id: Option<String>,
    pub profile: ModelProfile,
    pub mode: ShotMode,
    pub unans: UnansMode,
    pub partition: Option<Split>,
    pub max_in_flight: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            backend: ModelBackend::Http,
            system_id: None,
            profile: ModelProfile::new("gpt-4o", true, 128_000),
            mode: ShotMode::ZeroShot,
            unans: UnansMode::Inferred,
            partition: None,
            max_in_flight: 8,
        }
    }
}

impl ExtractConfig {
    pub fn system_id(&self) -> String {
        match (&self.system_id, self.backend) {
            (Some(id), _) => id.clone(),
            (None, ModelBackend::Echo) => "gold-echo".into(),
            (None, ModelBackend::Http) => self.profile.model_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub window: usize,
    pub partition: Option<Split>,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            window: DEFAULT_WINDOW,
            partition: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub unans: UnansMode,
    pub convention: SentenceConvention,
    pub by_answers: bool,
    pub format: ReportFormat,
    pub partition: Option<Split>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            unans: UnansMode::Inferred,
            convention: SentenceConvention::AnswerableOnly,
            by_answers: true,
            format: ReportFormat::Markdown,
            partition: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanAgreementConfig {
    pub seeds: u64,
    pub partition: Option<Split>,
    /// Only pairs of questions that survived aggregation; turn off for the
    /// pre-filtering figure.
    pub retained_only: bool,
}

impl Default for HumanAgreementConfig {
    fn default() -> Self {
        HumanAgreementConfig {
            seeds: DEFAULT_AGREEMENT_SEEDS,
            partition: None,
            retained_only: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub stages: Vec<String>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            stages: ["aggregate", "split", "stats", "translate", "extract", "evaluate"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// A parsed config together with the directory artifacts live in.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub work_dir: PathBuf,
}

impl Loaded {
    pub fn load(path: Option<&Path>, work_dir_override: Option<&Path>) -> anyhow::Result<Self> {
        let (config, base) = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let config: PipelineConfig =
                    toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (config, base)
            }
            None => (PipelineConfig::default(), PathBuf::new()),
        };
        let work_dir = match work_dir_override {
            Some(w) => w.to_path_buf(),
            None => base.join(&config.paths.work_dir).components().collect(),
        };
        Ok(Loaded { config, work_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.work_dir.join(p)
    }
}
