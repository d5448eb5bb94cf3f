use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Question};
use crate::extraction::fewshot::FewShotBank;
use crate::extraction::parse::render_list;
use crate::llm::{ChatMessage, Role};
use crate::template::{fill, load_or_default};

pub const DEFAULT_TEMPERATURE: f64 = 0.75;

const SYSTEM_V1: &str = include_str!("../../data/templates/extract_system.v1.txt");
const USER_V1: &str = include_str!("../../data/templates/extract_user.v1.txt");
const EXPLICIT_V1: &str = include_str!("../../data/templates/extract_explicit_suffix.v1.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    pub supports_system_role: bool,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub max_context_tokens: usize,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

impl ModelProfile {
    pub fn new(model_id: impl Into<String>, supports_system_role: bool, max_context_tokens: usize) -> Self {
        ModelProfile {
            model_id: model_id.into(),
            supports_system_role,
            temperature: DEFAULT_TEMPERATURE,
            max_context_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotMode {
    #[serde(rename = "0shot")]
    ZeroShot,
    #[serde(rename = "5shot")]
    FiveShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnansMode {
    Inferred,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub user: String,
    pub explicit_suffix: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            system: SYSTEM_V1.trim_end().to_string(),
            user: USER_V1.trim_end().to_string(),
            explicit_suffix: EXPLICIT_V1.trim_end().to_string(),
        }
    }
}

impl PromptTemplates {
    /// Bundled templates, with any of `extract_system.v1.txt`,
    /// `extract_user.v1.txt`, `extract_explicit_suffix.v1.txt` in `dir`
    /// taking precedence.
    pub fn load(dir: Option<&Path>) -> std::io::Result<Self> {
        Ok(PromptTemplates {
            system: load_or_default(dir, "extract_system.v1.txt", SYSTEM_V1)?
                .trim_end()
                .to_string(),
            user: load_or_default(dir, "extract_user.v1.txt", USER_V1)?
                .trim_end()
                .to_string(),
            explicit_suffix: load_or_default(dir, "extract_explicit_suffix.v1.txt", EXPLICIT_V1)?
                .trim_end()
                .to_string(),
        })
    }

    fn user_message(&self, question: &str, document: &str, unans: UnansMode) -> String {
        let body = fill(&self.user, &[("question", question), ("document", document)]);
        match unans {
            UnansMode::Inferred => body,
            UnansMode::Explicit => format!("{body}\n\n{}", self.explicit_suffix),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs about {estimated} tokens but {model} accepts {limit}")]
    Capacity {
        model: String,
        estimated: usize,
        limit: usize,
    },
    #[error("five-shot prompts need a few-shot bank")]
    MissingBank,
}

/// Rough token count: four characters per token plus a small per-message
/// overhead. Deliberately conservative; no tokenizer is bundled.
pub fn estimate_tokens(messages: &[ChatMessage]) -> usize {
    messages
        .iter()
        .map(|m| m.content.chars().count().div_ceil(4) + 4)
        .sum()
}

/// Assembles the chat for one question.
///
/// Zero-shot gives `[system, user]`; five-shot inserts one user/assistant
/// pair per exemplar before the final user message. Without system-role
/// support the system text is prepended to the first user message.
pub fn build_messages(
    question: &Question,
    doc: &Document,
    mode: ShotMode,
    unans: UnansMode,
    profile: &ModelProfile,
    bank: Option<&FewShotBank>,
    templates: &PromptTemplates,
) -> Result<Vec<ChatMessage>, PromptError> {
    let mut messages = vec![ChatMessage::system(templates.system.clone())];
    if mode == ShotMode::FiveShot {
        let bank = bank.ok_or(PromptError::MissingBank)?;
        for e in &bank.exemplars {
            messages.push(ChatMessage::user(templates.user_message(
                &e.question,
                &e.render_excerpt(),
                unans,
            )));
            let list = render_list(&e.answer);
            let answer = match unans {
                UnansMode::Inferred => list,
                UnansMode::Explicit => {
                    let verdict = if e.answer.is_empty() {
                        "UNANSWERABLE"
                    } else {
                        "ANSWERABLE"
                    };
                    format!("{verdict}\n{list}")
                }
            };
            messages.push(ChatMessage::assistant(answer));
        }
    }
    messages.push(ChatMessage::user(templates.user_message(
        &question.text,
        &doc.render_with_ids(),
        unans,
    )));

    if !profile.supports_system_role {
        let system = messages.remove(0);
        let first = messages
            .iter_mut()
            .find(|m| m.role == Role::User)
            .expect("prompt has a user message");
        first.content = format!("{}\n\n{}", system.content, first.content);
    }

    let estimated = estimate_tokens(&messages);
    if estimated > profile.max_context_tokens {
        return Err(PromptError::Capacity {
            model: profile.model_id.clone(),
            estimated,
            limit: profile.max_context_tokens,
        });
    }
    Ok(messages)
}
