use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use qaforge_core::corpus::{Document, Language, Question};
use qaforge_core::translation::{
    retranslate_question, translate_document_aligned, translate_question, CachingTranslator, HttpTranslator,
    IdentityTranslator, ReplayTranslator, TaggingTranslator, TranslationCache, Translator,
};
use serde_json::json;

use super::{read, write, Ctx, HINT_DOCUMENTS, HINT_QUESTIONS};
use crate::cli::TranslateArgs;
use crate::config::{PairingsConfig, TranslatorBackend};
use crate::error::{Classify, Failure, StageResult};

/// File names inside the translations directory.
pub fn documents_file(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("documents.{lang}.jsonl"))
}

pub fn questions_file(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("questions.{lang}.jsonl"))
}

pub fn retranslated_file(dir: &Path, lang: &str, pivot: &str) -> PathBuf {
    dir.join(format!("questions.{lang}.via-{pivot}.jsonl"))
}

pub fn parse_languages(codes: &[String]) -> StageResult<Vec<Language>> {
    codes
        .iter()
        .map(|c| Language::new(c).map_err(Failure::usage))
        .collect()
}

/// Languages the configured pairings need translations into.
pub fn needed_languages(pairings: &PairingsConfig, extra: &[String]) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = extra.iter().cloned().collect();
    out.extend(pairings.document_languages.iter().cloned());
    out.extend(pairings.question_languages.iter().cloned());
    out
}

pub fn retranslation_language(pairings: &PairingsConfig) -> StageResult<Option<Language>> {
    if pairings.retranslation_pivots.is_empty() {
        return Ok(None);
    }
    let code = pairings
        .retranslation_language
        .as_deref()
        .ok_or_else(|| Failure::usage("[pairings].retranslation_pivots needs retranslation_language"))?;
    Language::new(code).map(Some).map_err(Failure::usage)
}

/// Order-preserving map that stops at the first error.
fn map_all<T, U, E>(items: &[T], f: impl Fn(&T) -> Result<U, E>) -> Result<Vec<U>, E> {
    items.iter().map(f).collect()
}

pub fn translate(ctx: &Ctx, args: TranslateArgs) -> StageResult<()> {
    let cfg = &ctx.config().translate;
    let paths = &ctx.config().paths;
    let pairings = &ctx.config().pairings;
    let backend = args.backend.unwrap_or(cfg.backend);
    let extra = if args.targets.is_empty() {
        cfg.targets.clone()
    } else {
        args.targets
    };
    let targets = parse_languages(&needed_languages(pairings, &extra).into_iter().collect::<Vec<_>>())?;
    let pivots = parse_languages(&pairings.retranslation_pivots)?;
    let home = retranslation_language(pairings)?;
    if targets.is_empty() && pivots.is_empty() {
        return Err(Failure::usage(
            "translate: no target languages (--target, [translate].targets or [pairings])",
        ));
    }

    let doc_path = ctx.pick(&args.input, &paths.documents);
    let q_path = ctx.path(&paths.questions);
    let documents: Vec<Document> = read("translate", &doc_path, HINT_DOCUMENTS)?;
    let questions: Vec<Question> = read("translate", &q_path, HINT_QUESTIONS)?;
    let questions: Vec<Question> = questions.into_iter().filter(|q| q.is_annotatable()).collect();
    let out_dir = ctx.path(&paths.translations);
    std::fs::create_dir_all(&out_dir).data()?;

    let cache = match &cfg.cache_dir {
        Some(d) => TranslationCache::open(ctx.path(d)).data()?,
        None => TranslationCache::in_memory(),
    };
    let job = Job {
        documents: &documents,
        questions: &questions,
        targets: &targets,
        pivots: &pivots,
        home: home.as_ref(),
        out_dir: &out_dir,
    };
    let written = match backend {
        TranslatorBackend::Identity => job.run(&IdentityTranslator)?,
        TranslatorBackend::Tagging => job.run(&TaggingTranslator::new())?,
        TranslatorBackend::Http => {
            let t = CachingTranslator::new(HttpTranslator::from_env().upstream()?, cache);
            job.run(&t)?
        }
        TranslatorBackend::Replay => {
            let dir = cfg
                .cache_dir
                .as_ref()
                .ok_or_else(|| Failure::usage("the replay backend needs [translate].cache_dir"))?;
            let t = ReplayTranslator::open(ctx.path(dir), &cfg.replay_backend).data()?;
            job.run(&t)?
        }
    };
    println!(
        "wrote {} translation files to {}",
        written.len(),
        out_dir.display()
    );

    let mut m = ctx.manifest(
        "translate",
        json!({
            "backend": backend,
            "targets": targets.iter().map(|l| l.code()).collect::<Vec<_>>(),
            "retranslation_language": home.as_ref().map(|l| l.code()),
            "pivots": pivots.iter().map(|l| l.code()).collect::<Vec<_>>(),
        }),
    );
    m.input("documents", &doc_path).data()?;
    m.input("questions", &q_path).data()?;
    for (role, p) in &written {
        m.output(role, p).data()?;
    }
    m.write().data()?;
    Ok(())
}

struct Job<'a> {
    documents: &'a [Document],
    questions: &'a [Question],
    targets: &'a [Language],
    pivots: &'a [Language],
    home: Option<&'a Language>,
    out_dir: &'a Path,
}

impl Job<'_> {
    fn run(&self, t: &dyn Translator) -> StageResult<Vec<(String, PathBuf)>> {
        let mut written = Vec::new();
        for target in self.targets {
            let docs = map_all(self.documents, |d| translate_document_aligned(d, target, t)).upstream()?;
            let qs = map_all(self.questions, |q| translate_question(q, target, t)).upstream()?;
            let dp = documents_file(self.out_dir, target.code());
            let qp = questions_file(self.out_dir, target.code());
            write(&dp, &docs)?;
            write(&qp, &qs)?;
            log::info!(
                "{}: {} documents, {} questions",
                target.code(),
                docs.len(),
                qs.len()
            );
            written.push((format!("documents.{}", target.code()), dp));
            written.push((format!("questions.{}", target.code()), qp));
        }
        if let Some(home) = self.home {
            let originals: Vec<&Question> = self
                .questions
                .iter()
                .filter(|q| &q.original_language == home && &q.language == home)
                .collect();
            for pivot in self.pivots {
                let qs = map_all(&originals, |q| retranslate_question(q, pivot, t)).upstream()?;
                let p = retranslated_file(self.out_dir, home.code(), pivot.code());
                write(&p, &qs)?;
                written.push((format!("questions.{}.via-{}", home.code(), pivot.code()), p));
            }
        }
        Ok(written)
    }
}
