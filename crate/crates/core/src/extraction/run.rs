use crate::corpus::{IndexSet, ParseStatus, PredictionRecord, Setting};
use crate::extraction::fewshot::FewShotBank;
use crate::extraction::parse::{parse_answer_list, parse_verdict_response};
use crate::extraction::prompt::{build_messages, ModelProfile, PromptTemplates, ShotMode, UnansMode};
use crate::extraction::ExtractionItem;
use crate::llm::{complete_with_retry, ChatModel, RetryPolicy};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub system_id: String,
    pub profile: ModelProfile,
    pub mode: ShotMode,
    pub unans: UnansMode,
    pub bank: Option<FewShotBank>,
    pub templates: PromptTemplates,
    pub retry: RetryPolicy,
    /// Upper bound on concurrent model requests.
    pub max_in_flight: usize,
}

impl RunOptions {
    pub fn new(profile: ModelProfile, mode: ShotMode, unans: UnansMode) -> Self {
        RunOptions {
            system_id: profile.model_id.clone(),
            profile,
            mode,
            unans,
            bank: None,
            templates: PromptTemplates::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }

    fn setting(&self) -> Setting {
        match self.mode {
            ShotMode::ZeroShot => Setting::ZeroShot,
            ShotMode::FiveShot => Setting::FiveShot,
        }
    }
}

/// Interprets one raw model response. In explicit mode a missing verdict
/// line is inferred from the list (empty means unanswerable) and the parse
/// is downgraded to `Recovered`.
pub fn interpret_response(
    text: &str,
    n_sentences: usize,
    unans: UnansMode,
) -> (IndexSet, ParseStatus, Option<bool>) {
    match unans {
        UnansMode::Inferred => {
            let (indices, status) = parse_answer_list(text, n_sentences);
            (indices, status, None)
        }
        UnansMode::Explicit => {
            let r = parse_verdict_response(text, n_sentences);
            match r.verdict_unanswerable {
                Some(v) => (r.indices, r.status, Some(v)),
                None => {
                    let status = match r.status {
                        ParseStatus::Failed => ParseStatus::Failed,
                        _ => ParseStatus::Recovered,
                    };
                    let inferred = r.indices.is_empty();
                    (r.indices, status, Some(inferred))
                }
            }
        }
    }
}

fn run_one(item: &ExtractionItem, client: &dyn ChatModel, opts: &RunOptions) -> PredictionRecord {
    let failed = |error: String| PredictionRecord {
        question_id: item.question.id.clone(),
        predicted: IndexSet::new(),
        explicit_unanswerable: (opts.unans == UnansMode::Explicit).then_some(true),
        system_id: opts.system_id.clone(),
        setting: opts.setting(),
        parse_status: ParseStatus::Failed,
        error: Some(error),
    };
    let messages = match build_messages(
        &item.question,
        &item.document,
        opts.mode,
        opts.unans,
        &opts.profile,
        opts.bank.as_ref(),
        &opts.templates,
    ) {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    let response = match complete_with_retry(
        client,
        &opts.profile.model_id,
        &messages,
        opts.profile.temperature,
        &opts.retry,
    ) {
        Ok(r) => r,
        Err(e) => {
            log::warn!("question {}: {e}", item.question.id);
            return failed(e.to_string());
        }
    };
    let (predicted, parse_status, explicit_unanswerable) =
        interpret_response(&response, item.document.len(), opts.unans);
    PredictionRecord {
        question_id: item.question.id.clone(),
        predicted,
        explicit_unanswerable,
        system_id: opts.system_id.clone(),
        setting: opts.setting(),
        parse_status,
        error: None,
    }
}

/// Runs the model over every item with bounded concurrency. Output order
/// matches input order; failures become `Failed` records with an error.
pub fn run_extraction(
    items: &[ExtractionItem],
    client: &dyn ChatModel,
    opts: &RunOptions,
) -> Vec<PredictionRecord> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(|item| run_one(item, client, opts)).collect())
}
