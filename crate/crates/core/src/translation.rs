//! Sentence-aligned translation and cross-language task construction.
//!
//! Documents are translated one sentence per backend call, so a document
//! keeps its sentence count and indices and gold sets carry over unchanged.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Document, Language, QAInstance, Question, Sentence};
use crate::extraction::ExtractionItem;

pub const TRANSLATOR_ENDPOINT_ENV: &str = "QAFORGE_TRANSLATOR_ENDPOINT";
pub const TRANSLATOR_API_KEY_ENV: &str = "QAFORGE_TRANSLATOR_API_KEY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranslateError {
    #[error("backend {backend} does not support {source_lang} -> {target}")]
    Unsupported {
        backend: String,
        source_lang: String,
        target: String,
    },
    #[error("translation backend failed: {0}")]
    Backend(String),
    #[error("no recorded translation for {source_lang} -> {target}: {text:?}")]
    NotRecorded {
        source_lang: String,
        target: String,
        text: String,
    },
    #[error("backend returned an empty translation for {0:?}")]
    Empty(String),
    #[error("translation cache: {0}")]
    Cache(String),
    #[error("document {document}: {message}")]
    Document { document: String, message: String },
}

pub trait Translator: Send + Sync {
    fn backend_id(&self) -> &str;

    fn supports(&self, source: &Language, target: &Language) -> bool;

    /// Translates one sentence. Implementations may return several lines;
    /// callers go through [`translate_sentence`], which joins them.
    fn translate(&self, text: &str, source: &Language, target: &Language) -> Result<String, TranslateError>;
}

fn check_pair(t: &dyn Translator, source: &Language, target: &Language) -> Result<(), TranslateError> {
    if t.supports(source, target) {
        Ok(())
    } else {
        Err(TranslateError::Unsupported {
            backend: t.backend_id().to_string(),
            source_lang: source.code().to_string(),
            target: target.code().to_string(),
        })
    }
}

/// Translates a single sentence and forces the result onto one line.
pub fn translate_sentence(
    t: &dyn Translator,
    text: &str,
    source: &Language,
    target: &Language,
) -> Result<String, TranslateError> {
    let raw = t.translate(text, source, target)?;
    let joined = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        return Err(TranslateError::Empty(text.to_string()));
    }
    Ok(joined)
}

/// Returns the input unchanged.
#[derive(Debug, Default, Clone)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn backend_id(&self) -> &str {
        "identity"
    }

    fn supports(&self, _: &Language, _: &Language) -> bool {
        true
    }

    fn translate(&self, text: &str, _: &Language, _: &Language) -> Result<String, TranslateError> {
        Ok(text.to_string())
    }
}

/// Appends `<target>` to every sentence, making alignment visible in tests.
#[derive(Debug, Default, Clone)]
pub struct TaggingTranslator {
    languages: Option<HashSet<String>>,
}

impl TaggingTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restrict support to pairs among these language codes.
    pub fn with_languages(codes: &[&str]) -> Self {
        TaggingTranslator {
            languages: Some(codes.iter().map(|c| c.to_string()).collect()),
        }
    }

    pub fn tag(text: &str, target: &Language) -> String {
        format!("{text} <{}>", target.code())
    }
}

impl Translator for TaggingTranslator {
    fn backend_id(&self) -> &str {
        "tagging"
    }

    fn supports(&self, source: &Language, target: &Language) -> bool {
        match &self.languages {
            None => true,
            Some(set) => set.contains(source.code()) && set.contains(target.code()),
        }
    }

    fn translate(&self, text: &str, _: &Language, target: &Language) -> Result<String, TranslateError> {
        Ok(Self::tag(text, target))
    }
}

/// DeepL-compatible HTTP backend (`POST {endpoint}/v2/translate`).
pub struct HttpTranslator {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct HttpRequest<'a> {
    text: [&'a str; 1],
    source_lang: String,
    target_lang: String,
}

#[derive(Deserialize)]
struct HttpResponse {
    translations: Vec<HttpTranslation>,
}

#[derive(Deserialize)]
struct HttpTranslation {
    text: String,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpTranslator {
            endpoint: endpoint.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("static client configuration"),
        }
    }

    pub fn from_env() -> Result<Self, TranslateError> {
        let endpoint = std::env::var(TRANSLATOR_ENDPOINT_ENV)
            .map_err(|_| TranslateError::Backend(format!("{TRANSLATOR_ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, std::env::var(TRANSLATOR_API_KEY_ENV).ok()))
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/translate") {
            base.to_string()
        } else {
            format!("{base}/v2/translate")
        }
    }
}

impl Translator for HttpTranslator {
    fn backend_id(&self) -> &str {
        "http"
    }

    fn supports(&self, source: &Language, target: &Language) -> bool {
        source != target
    }

    fn translate(&self, text: &str, source: &Language, target: &Language) -> Result<String, TranslateError> {
        let mut request = self.client.post(self.url()).json(&HttpRequest {
            text: [text],
            source_lang: source.code().to_uppercase(),
            target_lang: target.code().to_uppercase(),
        });
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("DeepL-Auth-Key {key}"));
        }
        let response = request
            .send()
            .map_err(|e| TranslateError::Backend(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| TranslateError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(TranslateError::Backend(format!(
                "HTTP {}: {body}",
                status.as_u16()
            )));
        }
        let parsed: HttpResponse =
            serde_json::from_str(&body).map_err(|e| TranslateError::Backend(e.to_string()))?;
        parsed
            .translations
            .into_iter()
            .next()
            .map(|t| t.text)
            .ok_or_else(|| TranslateError::Backend("response has no translations".into()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    source: Language,
    target: Language,
    hash: String,
    text: String,
    translation: String,
}

type CacheKey = (String, String, String);

/// Persistent translation memory keyed by (backend, language pair,
/// sentence hash). One JSONL file per backend under the cache directory.
pub struct TranslationCache {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<String, HashMap<CacheKey, String>>>,
}

pub fn sentence_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl TranslationCache {
    pub fn in_memory() -> Self {
        TranslationCache {
            dir: None,
            entries: Mutex::new(HashMap::new()),
        }
    }

    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TranslateError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| TranslateError::Cache(e.to_string()))?;
        let cache = TranslationCache {
            dir: Some(dir),
            entries: Mutex::new(HashMap::new()),
        };
        Ok(cache)
    }

    fn file(&self, backend: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{backend}.jsonl")))
    }

    fn ensure_loaded(&self, backend: &str) -> Result<(), TranslateError> {
        let mut entries = self.entries.lock().expect("cache lock");
        if entries.contains_key(backend) {
            return Ok(());
        }
        let mut table = HashMap::new();
        if let Some(path) = self.file(backend).filter(|p| p.exists()) {
            let records: Vec<CacheEntry> =
                crate::corpus::read_jsonl(&path).map_err(|e| TranslateError::Cache(e.to_string()))?;
            for r in records {
                table.insert(
                    (r.source.code().to_string(), r.target.code().to_string(), r.hash),
                    r.translation,
                );
            }
        }
        entries.insert(backend.to_string(), table);
        Ok(())
    }

    pub fn get(
        &self,
        backend: &str,
        text: &str,
        source: &Language,
        target: &Language,
    ) -> Result<Option<String>, TranslateError> {
        self.ensure_loaded(backend)?;
        let entries = self.entries.lock().expect("cache lock");
        let key = (
            source.code().to_string(),
            target.code().to_string(),
            sentence_hash(text),
        );
        Ok(entries.get(backend).and_then(|t| t.get(&key)).cloned())
    }

    pub fn put(
        &self,
        backend: &str,
        text: &str,
        source: &Language,
        target: &Language,
        translation: &str,
    ) -> Result<(), TranslateError> {
        self.ensure_loaded(backend)?;
        let mut entries = self.entries.lock().expect("cache lock");
        let hash = sentence_hash(text);
        let key = (source.code().to_string(), target.code().to_string(), hash.clone());
        let table = entries.entry(backend.to_string()).or_default();
        if table.get(&key).is_some_and(|t| t == translation) {
            return Ok(());
        }
        table.insert(key, translation.to_string());
        if let Some(path) = self.file(backend) {
            let entry = CacheEntry {
                source: source.clone(),
                target: target.clone(),
                hash,
                text: text.to_string(),
                translation: translation.to_string(),
            };
            let line = serde_json::to_string(&entry).map_err(|e| TranslateError::Cache(e.to_string()))?;
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| TranslateError::Cache(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| TranslateError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

/// Consults the cache before calling the wrapped backend.
pub struct CachingTranslator<T> {
    inner: T,
    cache: TranslationCache,
}

impl<T: Translator> CachingTranslator<T> {
    pub fn new(inner: T, cache: TranslationCache) -> Self {
        CachingTranslator { inner, cache }
    }
}

impl<T: Translator> Translator for CachingTranslator<T> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn supports(&self, source: &Language, target: &Language) -> bool {
        self.inner.supports(source, target)
    }

    fn translate(&self, text: &str, source: &Language, target: &Language) -> Result<String, TranslateError> {
        let backend = self.inner.backend_id();
        if let Some(hit) = self.cache.get(backend, text, source, target)? {
            return Ok(hit);
        }
        let out = self.inner.translate(text, source, target)?;
        self.cache.put(backend, text, source, target, &out)?;
        Ok(out)
    }
}

/// Serves translations recorded in a cache directory and never calls out.
pub struct ReplayTranslator {
    backend: String,
    cache: TranslationCache,
}

impl ReplayTranslator {
    /// Replays entries recorded by `backend` (e.g. `http`) under `dir`.
    pub fn open(dir: impl AsRef<Path>, backend: &str) -> Result<Self, TranslateError> {
        let dir = dir.as_ref();
        if !dir.join(format!("{backend}.jsonl")).exists() {
            return Err(TranslateError::Cache(format!(
                "no recorded translations for backend {backend} in {}",
                dir.display()
            )));
        }
        Ok(ReplayTranslator {
            backend: backend.to_string(),
            cache: TranslationCache::open(dir)?,
        })
    }
}

impl Translator for ReplayTranslator {
    fn backend_id(&self) -> &str {
        &self.backend
    }

    fn supports(&self, _: &Language, _: &Language) -> bool {
        true
    }

    fn translate(&self, text: &str, source: &Language, target: &Language) -> Result<String, TranslateError> {
        self.cache
            .get(&self.backend, text, source, target)?
            .ok_or_else(|| TranslateError::NotRecorded {
                source_lang: source.code().to_string(),
                target: target.code().to_string(),
                text: text.to_string(),
            })
    }
}

/// Translates every sentence of `doc` into `target`. Indices, id, region and
/// original language are kept; any sentence failure fails the document.
pub fn translate_document_aligned(
    doc: &Document,
    target: &Language,
    t: &dyn Translator,
) -> Result<Document, TranslateError> {
    if &doc.language == target {
        return Ok(doc.clone());
    }
    check_pair(t, &doc.language, target)?;
    let sentences: Result<Vec<Sentence>, TranslateError> = doc
        .sentences
        .par_iter()
        .map(|s| {
            translate_sentence(t, &s.text, &doc.language, target)
                .map(|text| Sentence { index: s.index, text })
        })
        .collect();
    let sentences = sentences.map_err(|e| TranslateError::Document {
        document: doc.id.clone(),
        message: e.to_string(),
    })?;
    let mut out = Document {
        id: doc.id.clone(),
        language: target.clone(),
        original_language: doc.original_language.clone(),
        source_region: doc.source_region.clone(),
        sentences,
        content_hash: String::new(),
    };
    out.refresh_hash();
    Ok(out)
}

/// Questions are single sentences and go through the same per-sentence path.
pub fn translate_question(
    q: &Question,
    target: &Language,
    t: &dyn Translator,
) -> Result<Question, TranslateError> {
    if &q.language == target {
        return Ok(q.clone());
    }
    check_pair(t, &q.language, target)?;
    let mut out = q.clone();
    out.text = translate_sentence(t, &q.text, &q.language, target)?;
    out.language = target.clone();
    Ok(out)
}

/// Round-trips a question through `pivot` back into its original language.
pub fn retranslate_question(
    q: &Question,
    pivot: &Language,
    t: &dyn Translator,
) -> Result<Question, TranslateError> {
    let home = q.original_language.clone();
    check_pair(t, &q.language, pivot)?;
    check_pair(t, pivot, &home)?;
    let there = translate_sentence(t, &q.text, &q.language, pivot)?;
    let back = translate_sentence(t, &there, pivot, &home)?;
    let mut out = q.clone();
    out.text = back;
    out.language = home;
    out.retranslated_via = Some(pivot.clone());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairingMode {
    Direct,
    Retranslated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossLingualPairing {
    pub document_language: Language,
    pub question_language: Language,
    pub mode: PairingMode,
    /// Pivot language of retranslated questions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot: Option<Language>,
}

impl CrossLingualPairing {
    pub fn direct(document_language: Language, question_language: Language) -> Self {
        CrossLingualPairing {
            document_language,
            question_language,
            mode: PairingMode::Direct,
            pivot: None,
        }
    }

    /// Short label such as `de/en` or `de/de via ar`.
    pub fn label(&self) -> String {
        let base = format!(
            "{}/{}",
            self.document_language.code(),
            self.question_language.code()
        );
        match &self.pivot {
            Some(p) => format!("{base} via {}", p.code()),
            None => base,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskSet {
    pub pairing: CrossLingualPairing,
    pub items: Vec<ExtractionItem>,
}

/// Documents and questions available in one language, keyed by id.
#[derive(Debug, Clone)]
pub struct LanguageCorpus {
    pub language: Language,
    pub documents: HashMap<String, Document>,
    pub questions: HashMap<String, Question>,
}

impl LanguageCorpus {
    pub fn new(language: Language, documents: Vec<Document>, questions: Vec<Question>) -> Self {
        LanguageCorpus {
            language,
            documents: documents.into_iter().map(|d| (d.id.clone(), d)).collect(),
            questions: questions.into_iter().map(|q| (q.id.clone(), q)).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PairingError {
    #[error("no {language} corpus available")]
    MissingCorpus { language: String },
    #[error("no {language} translation for doc {document}")]
    MissingDocument { document: String, language: String },
    #[error("no {language} translation for question {question}")]
    MissingQuestion { question: String, language: String },
}

fn corpus_for<'a>(
    corpora: &'a BTreeMap<String, LanguageCorpus>,
    lang: &Language,
) -> Result<&'a LanguageCorpus, PairingError> {
    corpora
        .get(lang.code())
        .ok_or_else(|| PairingError::MissingCorpus {
            language: lang.code().to_string(),
        })
}

fn item_for(
    instance: &QAInstance,
    documents: &LanguageCorpus,
    questions: &HashMap<String, Question>,
    question_language: &Language,
) -> Result<ExtractionItem, PairingError> {
    let document =
        documents
            .documents
            .get(&instance.document_id)
            .ok_or_else(|| PairingError::MissingDocument {
                document: instance.document_id.clone(),
                language: documents.language.code().to_string(),
            })?;
    let question = questions
        .get(&instance.question_id)
        .ok_or_else(|| PairingError::MissingQuestion {
            question: instance.question_id.clone(),
            language: question_language.code().to_string(),
        })?;
    Ok(ExtractionItem {
        instance: instance.clone(),
        question: question.clone(),
        document: document.clone(),
    })
}

/// One task set per (document language, question language) combination,
/// in the order given. All sets share the instances' gold indices.
pub fn build_crosslingual_pairs(
    instances: &[QAInstance],
    corpora: &BTreeMap<String, LanguageCorpus>,
    doc_langs: &[Language],
    q_langs: &[Language],
) -> Result<Vec<TaskSet>, PairingError> {
    let mut out = Vec::with_capacity(doc_langs.len() * q_langs.len());
    for dl in doc_langs {
        let docs = corpus_for(corpora, dl)?;
        for ql in q_langs {
            let qs = corpus_for(corpora, ql)?;
            let items = instances
                .iter()
                .map(|inst| item_for(inst, docs, &qs.questions, ql))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(TaskSet {
                pairing: CrossLingualPairing::direct(dl.clone(), ql.clone()),
                items,
            });
        }
    }
    Ok(out)
}

/// Original-language documents paired with questions round-tripped through
/// each pivot. `retranslated` maps a pivot code to its question set.
pub fn build_retranslation_pairs(
    instances: &[QAInstance],
    original: &LanguageCorpus,
    retranslated: &BTreeMap<String, Vec<Question>>,
) -> Result<Vec<TaskSet>, PairingError> {
    let mut out = Vec::new();
    for (pivot_code, questions) in retranslated {
        let pivot = Language::new(pivot_code).map_err(|_| PairingError::MissingCorpus {
            language: pivot_code.clone(),
        })?;
        let by_id: HashMap<String, Question> = questions.iter().map(|q| (q.id.clone(), q.clone())).collect();
        let items = instances
            .iter()
            .map(|inst| item_for(inst, original, &by_id, &original.language))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(TaskSet {
            pairing: CrossLingualPairing {
                document_language: original.language.clone(),
                question_language: original.language.clone(),
                mode: PairingMode::Retranslated,
                pivot: Some(pivot),
            },
            items,
        });
    }
    Ok(out)
}
