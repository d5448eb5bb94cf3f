use std::collections::{HashMap, HashSet};

use chrono::{DateTime, Utc};
use qaforge_core::corpus::{read_jsonl, Document, GenStrategy, Language, Question, ReviewState};
use qaforge_core::ingestion::{fetch_documents, page_to_document};
use qaforge_core::llm::HttpChatModel;
use qaforge_core::question_gen::{
    assign_strategies, review_question, GenerationConfig, Generator, QgenTemplates, ReviewAction,
};
use serde::Deserialize;
use serde_json::json;

use super::{read, write, Ctx, HINT_DOCUMENTS};
use crate::cli::{IngestArgs, QgenArgs, ReviewArgs};
use crate::config::StrategyChoice;
use crate::error::{Classify, Failure, StageResult};

pub fn ingest(ctx: &Ctx, args: IngestArgs) -> StageResult<()> {
    let cfg = &ctx.config().ingest;
    let endpoint = args
        .endpoint
        .or_else(|| cfg.endpoint.clone())
        .ok_or_else(|| Failure::usage("ingest needs an endpoint (--endpoint or [ingest].endpoint)"))?;
    let codes = if args.languages.is_empty() {
        cfg.languages.clone()
    } else {
        args.languages
    };
    let languages: Vec<Language> = codes
        .iter()
        .map(|c| Language::new(c).map_err(Failure::usage))
        .collect::<Result<_, _>>()?;

    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for lang in &languages {
        let pages = fetch_documents(&endpoint, lang).upstream()?;
        log::info!("{}: {} pages", lang.code(), pages.len());
        for page in &pages {
            let Some(doc) = page_to_document(page, &cfg.source_region) else {
                log::warn!("{}: no sentences after segmentation, skipped", page.url);
                continue;
            };
            if !seen.insert(doc.id.clone()) {
                return Err(Failure::data(format!(
                    "duplicate document id {} ({})",
                    doc.id, page.url
                )));
            }
            documents.push(doc);
        }
    }
    let out = ctx.pick(&args.out, &ctx.config().paths.documents);
    write(&out, &documents)?;
    println!("wrote {} documents to {}", documents.len(), out.display());

    let mut m = ctx.manifest(
        "ingest",
        json!({"endpoint": endpoint, "languages": codes, "source_region": cfg.source_region}),
    );
    m.output("documents", &out).data()?;
    m.write().data()?;
    Ok(())
}

pub fn qgen(ctx: &Ctx, args: QgenArgs) -> StageResult<()> {
    let cfg = &ctx.config().qgen;
    let input = ctx.pick(&args.input, &ctx.config().paths.documents);
    let documents: Vec<Document> = read("qgen", &input, HINT_DOCUMENTS)?;
    let choice = args.strategy.unwrap_or(cfg.strategy);
    let mut gen_cfg = GenerationConfig::new(
        args.model.unwrap_or_else(|| cfg.model.clone()),
        GenStrategy::FullDocument,
    );
    gen_cfg.temperature = cfg.temperature;
    gen_cfg.questions_per_document = args.n.unwrap_or(cfg.questions_per_document);
    gen_cfg.validate().map_err(Failure::usage)?;
    let seed = ctx.config().seeds.qgen;

    let strategies: HashMap<String, GenStrategy> = match choice {
        StrategyChoice::Mixed => assign_strategies(&documents, seed).into_iter().collect(),
        StrategyChoice::Summary => documents
            .iter()
            .map(|d| (d.id.clone(), GenStrategy::ThreeWordSummary))
            .collect(),
        StrategyChoice::Full => documents
            .iter()
            .map(|d| (d.id.clone(), GenStrategy::FullDocument))
            .collect(),
    };

    let client = HttpChatModel::from_env().upstream()?;
    let mut generator = Generator::new(&client);
    generator.templates = QgenTemplates::load(
        ctx.config()
            .paths
            .templates
            .as_deref()
            .map(|p| ctx.path(p))
            .as_deref(),
    )
    .data()?;
    let (questions, errors) =
        generator.generate_corpus(&documents, &gen_cfg, &|d: &Document| strategies[&d.id]);

    let out = ctx.pick(&args.out, &ctx.config().paths.generated_questions);
    write(&out, &questions)?;
    println!(
        "wrote {} questions for {} documents to {}",
        questions.len(),
        documents.len() - errors.len(),
        out.display()
    );

    let mut m = ctx.manifest(
        "qgen",
        json!({
            "model": gen_cfg.model_id,
            "temperature": gen_cfg.temperature,
            "questions_per_document": gen_cfg.questions_per_document,
            "strategy": choice,
            "templates": ctx.config().paths.templates,
        }),
    );
    m.seed("qgen", seed);
    m.input("documents", &input).data()?;
    m.output("generated_questions", &out).data()?;
    m.write().data()?;

    if errors.is_empty() {
        Ok(())
    } else {
        for e in &errors {
            log::error!("{e}");
        }
        Err(Failure::upstream(format!(
            "question generation failed for {} documents",
            errors.len()
        )))
    }
}

/// One line of a review actions file.
#[derive(Debug, Deserialize)]
struct ReviewLine {
    question_id: String,
    #[serde(flatten)]
    action: ReviewAction,
    /// Recorded in the edit history; the current time when absent.
    #[serde(default)]
    at: Option<DateTime<Utc>>,
}

pub fn review(ctx: &Ctx, args: ReviewArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let input = ctx.pick(&args.input, &paths.generated_questions);
    let mut questions: Vec<Question> = read("review", &input, "run qgen first")?;
    let actions_path = ctx.pick(&args.actions, &paths.reviews);

    let actions: Vec<ReviewLine> = if actions_path.exists() {
        read_jsonl(&actions_path).data()?
    } else if args.list {
        Vec::new()
    } else {
        return Err(Failure::data(format!(
            "review: {} not found (write review actions there, or use --list)",
            actions_path.display()
        )));
    };

    let index: HashMap<String, usize> = questions
        .iter()
        .enumerate()
        .map(|(i, q)| (q.id.clone(), i))
        .collect();
    for line in &actions {
        let i = *index.get(&line.question_id).ok_or_else(|| {
            Failure::data(format!("review action for unknown question {}", line.question_id))
        })?;
        questions[i] =
            review_question(&questions[i], &line.action, line.at.unwrap_or_else(Utc::now)).data()?;
    }

    if args.list {
        for q in questions
            .iter()
            .filter(|q| q.review_state == ReviewState::Generated)
        {
            println!("{}", serde_json::to_string(q).data()?);
        }
        return Ok(());
    }

    let out = ctx.pick(&args.out, &paths.questions);
    write(&out, &questions)?;
    let pending = questions
        .iter()
        .filter(|q| q.review_state == ReviewState::Generated)
        .count();
    let usable = questions.iter().filter(|q| q.is_annotatable()).count();
    println!(
        "{} actions applied; {usable} questions ready for annotation, {pending} pending",
        actions.len()
    );

    let mut m = ctx.manifest("review", json!({}));
    m.input("generated_questions", &input).data()?;
    m.input("reviews", &actions_path).data()?;
    m.output("questions", &out).data()?;
    m.write().data()?;
    Ok(())
}
