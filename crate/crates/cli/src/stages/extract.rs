use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use qaforge_core::corpus::{Document, IndexSet, QAInstance, Question};
use qaforge_core::extraction::{
    classifier_examples, items_from_corpus, run_extraction, ExtractionItem, FewShotBank, PromptTemplates,
    RunOptions, ShotMode, UnansMode,
};
use qaforge_core::llm::{ChatModel, GoldEchoModel, HttpChatModel};
use qaforge_core::translation::{
    build_crosslingual_pairs, build_retranslation_pairs, CrossLingualPairing, LanguageCorpus,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::translate::{
    documents_file, parse_languages, questions_file, retranslated_file, retranslation_language,
};
use super::{
    read, select_partition, write, write_json, Ctx, HINT_DOCUMENTS, HINT_INSTANCES, HINT_QUESTIONS,
    HINT_TRANSLATIONS,
};
use crate::cli::{ClassifierArgs, ExtractArgs};
use crate::config::ModelBackend;
use crate::error::{Classify, Failure, StageResult};

/// Name of the file listing what `extract` wrote, inside the predictions directory.
pub const PREDICTION_INDEX: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub pairing: String,
    pub file: String,
    pub system_id: String,
    /// Set when only questions originally in this language were run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_language: Option<String>,
}

/// File-name form of a pairing label: `orig`, `de-en`, `de-de.via-ar`.
pub fn pairing_tag(pairing: Option<&CrossLingualPairing>) -> String {
    match pairing {
        None => "orig".into(),
        Some(p) => {
            let base = format!("{}-{}", p.document_language.code(), p.question_language.code());
            match &p.pivot {
                Some(v) => format!("{base}.via-{}", v.code()),
                None => base,
            }
        }
    }
}

struct Task {
    pairing: Option<CrossLingualPairing>,
    items: Vec<ExtractionItem>,
    original_language: Option<String>,
}

fn load_corpus(ctx: &Ctx, code: &str) -> StageResult<LanguageCorpus> {
    let dir = ctx.path(&ctx.config().paths.translations);
    let lang = parse_languages(&[code.to_string()])?.remove(0);
    let docs: Vec<Document> = read("extract", &documents_file(&dir, code), HINT_TRANSLATIONS)?;
    let qs: Vec<Question> = read("extract", &questions_file(&dir, code), HINT_TRANSLATIONS)?;
    Ok(LanguageCorpus::new(lang, docs, qs))
}

fn build_tasks(
    ctx: &Ctx,
    instances: &[QAInstance],
    documents: &[Document],
    questions: &[Question],
) -> StageResult<(Vec<Task>, Vec<PathBuf>)> {
    let pairings = &ctx.config().pairings;
    let mut inputs = Vec::new();
    if pairings.is_monolingual() {
        let items = items_from_corpus(instances, questions, documents).data()?;
        return Ok((
            vec![Task {
                pairing: None,
                items,
                original_language: None,
            }],
            inputs,
        ));
    }
    let dir = ctx.path(&ctx.config().paths.translations);
    let mut tasks = Vec::new();
    let doc_langs = parse_languages(&pairings.document_languages)?;
    let q_langs = parse_languages(&pairings.question_languages)?;
    if !doc_langs.is_empty() || !q_langs.is_empty() {
        if doc_langs.is_empty() || q_langs.is_empty() {
            return Err(Failure::usage(
                "[pairings] needs both document_languages and question_languages",
            ));
        }
        let mut corpora = BTreeMap::new();
        for lang in doc_langs.iter().chain(&q_langs) {
            if !corpora.contains_key(lang.code()) {
                corpora.insert(lang.code().to_string(), load_corpus(ctx, lang.code())?);
                inputs.push(documents_file(&dir, lang.code()));
                inputs.push(questions_file(&dir, lang.code()));
            }
        }
        for set in build_crosslingual_pairs(instances, &corpora, &doc_langs, &q_langs).data()? {
            tasks.push(Task {
                pairing: Some(set.pairing),
                items: set.items,
                original_language: None,
            });
        }
    }
    if let Some(home) = retranslation_language(pairings)? {
        let originals: Vec<Document> = documents.iter().filter(|d| d.language == home).cloned().collect();
        let own: Vec<Question> = questions
            .iter()
            .filter(|q| q.language == home && q.original_language == home)
            .cloned()
            .collect();
        let own_ids: std::collections::HashSet<&str> = own.iter().map(|q| q.id.as_str()).collect();
        let subset: Vec<QAInstance> = instances
            .iter()
            .filter(|i| own_ids.contains(i.question_id.as_str()))
            .cloned()
            .collect();
        let original = LanguageCorpus::new(home.clone(), originals, own);
        let mut retranslated = BTreeMap::new();
        for pivot in &pairings.retranslation_pivots {
            let p = retranslated_file(&dir, home.code(), pivot);
            let qs: Vec<Question> = read("extract", &p, HINT_TRANSLATIONS)?;
            retranslated.insert(pivot.clone(), qs);
            inputs.push(p);
        }
        for set in build_retranslation_pairs(&subset, &original, &retranslated).data()? {
            tasks.push(Task {
                pairing: Some(set.pairing),
                items: set.items,
                original_language: Some(home.code().to_string()),
            });
        }
    }
    Ok((tasks, inputs))
}

fn echo_model(tasks: &[Task], unans: UnansMode) -> GoldEchoModel {
    let mut gold: HashMap<String, IndexSet> = HashMap::new();
    for item in tasks.iter().flat_map(|t| &t.items) {
        gold.insert(item.question.text.clone(), item.instance.gold.clone());
    }
    let m = GoldEchoModel::new(gold);
    match unans {
        UnansMode::Explicit => m.with_verdict(),
        UnansMode::Inferred => m,
    }
}

pub fn extract(ctx: &Ctx, args: ExtractArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().extract;
    let backend = args.backend.unwrap_or(cfg.backend);
    let mut profile = cfg.profile.clone();
    if let Some(m) = args.model {
        profile.model_id = m;
    }
    let mode = args.mode.unwrap_or(cfg.mode);
    let unans = args.unans.unwrap_or(cfg.unans);
    let mut effective = cfg.clone();
    effective.backend = backend;
    effective.profile = profile.clone();
    let system_id = effective.system_id();

    let inst_path = args.input.clone().unwrap_or_else(|| ctx.eval_instances_path());
    let instances: Vec<QAInstance> = read("extract", &inst_path, HINT_INSTANCES)?;
    let instances = select_partition("extract", instances, cfg.partition)?;
    let doc_path = ctx.path(&paths.documents);
    let q_path = ctx.path(&paths.questions);
    let documents: Vec<Document> = read("extract", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("extract", &q_path, HINT_QUESTIONS)?;
    let (tasks, extra_inputs) = build_tasks(ctx, &instances, &documents, &questions)?;

    let mut opts = RunOptions::new(profile.clone(), mode, unans);
    opts.system_id = system_id.clone();
    opts.max_in_flight = cfg.max_in_flight.max(1);
    opts.templates =
        PromptTemplates::load(paths.templates.as_deref().map(|p| ctx.path(p)).as_deref()).data()?;
    if mode == ShotMode::FiveShot {
        let bank = match &paths.fewshot_bank {
            Some(p) => FewShotBank::load(&ctx.path(p)).data()?,
            None => FewShotBank::english(),
        };
        bank.validate().data()?;
        opts.bank = Some(bank);
    }

    let model: Box<dyn ChatModel> = match backend {
        ModelBackend::Echo => Box::new(echo_model(&tasks, unans)),
        ModelBackend::Http => Box::new(HttpChatModel::from_env().upstream()?),
    };

    let out_dir = args.out.clone().unwrap_or_else(|| ctx.path(&paths.predictions));
    std::fs::create_dir_all(&out_dir).data()?;
    let mut index = Vec::new();
    let mut outputs = Vec::new();
    let mut all_failed = Vec::new();
    for task in &tasks {
        let label = task.pairing.as_ref().map(|p| p.label()).unwrap_or_default();
        let preds = run_extraction(&task.items, model.as_ref(), &opts);
        let errors = preds.iter().filter(|p| p.error.is_some()).count();
        let file = format!("{}.jsonl", pairing_tag(task.pairing.as_ref()));
        let path = out_dir.join(&file);
        write(&path, &preds)?;
        println!(
            "{} {}: {} predictions, {} model errors",
            system_id,
            if label.is_empty() { "original" } else { &label },
            preds.len(),
            errors
        );
        if errors > 0 && errors == preds.len() {
            all_failed.push(label.clone());
        }
        index.push(PredictionFile {
            pairing: label,
            file,
            system_id: system_id.clone(),
            original_language: task.original_language.clone(),
        });
        outputs.push(path);
    }
    let index_path = out_dir.join(PREDICTION_INDEX);
    write_json(&index_path, &index)?;

    let mut m = ctx.manifest(
        "extract",
        json!({
            "system_id": system_id,
            "backend": backend,
            "profile": profile,
            "mode": mode,
            "unans": unans,
            "partition": cfg.partition,
            "pairings": ctx.config().pairings,
            "fewshot_bank": opts.bank.as_ref().map(|b| &b.version),
            "templates": paths.templates,
        }),
    );
    m.input("instances", &inst_path).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    for p in &extra_inputs {
        m.input("translation", p).data()?;
    }
    for p in &outputs {
        m.output("predictions", p).data()?;
    }
    m.output("prediction_index", &index_path).data()?;
    m.write().data()?;

    if all_failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::upstream(format!(
            "every model call failed for {} pairing(s); see the error field of the prediction records",
            all_failed.len()
        )))
    }
}

pub fn export_classifier(ctx: &Ctx, args: ClassifierArgs) -> StageResult<()> {
    let paths = &ctx.config().paths;
    let cfg = &ctx.config().classifier;
    let window = args.window.unwrap_or(cfg.window);
    let inst_path = args.input.clone().unwrap_or_else(|| ctx.eval_instances_path());
    let instances: Vec<QAInstance> = read("export-classifier", &inst_path, HINT_INSTANCES)?;
    let instances = select_partition("export-classifier", instances, cfg.partition)?;
    let doc_path = ctx.path(&paths.documents);
    let q_path = ctx.path(&paths.questions);
    let documents: Vec<Document> = read("export-classifier", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("export-classifier", &q_path, HINT_QUESTIONS)?;
    let items = items_from_corpus(&instances, &questions, &documents).data()?;
    let examples: Vec<_> = items
        .iter()
        .flat_map(|it| classifier_examples(&it.instance, &it.question, &it.document, window))
        .collect();
    let out = ctx.pick(&args.out, &paths.classifier_examples);
    write(&out, &examples)?;
    let positives = examples.iter().filter(|e| e.label == Some(true)).count();
    println!(
        "wrote {} examples ({positives} positive) to {}",
        examples.len(),
        out.display()
    );

    let mut m = ctx.manifest(
        "export-classifier",
        json!({"window": window, "partition": cfg.partition}),
    );
    m.input("instances", &inst_path).data()?;
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    m.output("classifier_examples", &out).data()?;
    m.write().data()?;
    Ok(())
}
