//! Chat-model client abstraction.
//!
//! [`HttpChatModel`] talks to any OpenAI-compatible `/chat/completions`
//! endpoint. Mocks for tests and offline runs live alongside it.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::IndexSet;

pub const MODEL_ENDPOINT_ENV: &str = "QAFORGE_MODEL_ENDPOINT";
pub const MODEL_API_KEY_ENV: &str = "QAFORGE_MODEL_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("model endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unusable model response: {0}")]
    Content(String),
    #[error("model client not configured: {0}")]
    Config(String),
}

impl ClientError {
    /// Transport failures and server-side overload are worth retrying;
    /// anything about the content is not.
    pub fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status >= 500 || *status == 429,
            ClientError::Content(_) | ClientError::Config(_) => false,
        }
    }
}

pub trait ChatModel: Send + Sync {
    fn complete(
        &self,
        model_id: &str,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            attempts: 1,
            base_delay: Duration::ZERO,
        }
    }
}

/// Calls the model, retrying retryable errors with exponential backoff.
pub fn complete_with_retry(
    model: &dyn ChatModel,
    model_id: &str,
    messages: &[ChatMessage],
    temperature: f64,
    policy: &RetryPolicy,
) -> Result<String, ClientError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match model.complete(model_id, messages, temperature) {
            Err(e) if e.is_retryable() && attempt < policy.attempts.max(1) => {
                let delay = policy.base_delay * 2u32.pow(attempt - 1);
                log::debug!("retrying after {e} (attempt {attempt}, sleeping {delay:?})");
                std::thread::sleep(delay);
            }
            other => return other,
        }
    }
}

pub struct HttpChatModel {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatModel {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        HttpChatModel {
            endpoint: endpoint.into(),
            api_key,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("static client configuration"),
        }
    }

    /// Reads the endpoint and optional key from the environment.
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var(MODEL_ENDPOINT_ENV)
            .map_err(|_| ClientError::Config(format!("{MODEL_ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, std::env::var(MODEL_API_KEY_ENV).ok()))
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

impl ChatModel for HttpChatModel {
    fn complete(
        &self,
        model_id: &str,
        messages: &[ChatMessage],
        temperature: f64,
    ) -> Result<String, ClientError> {
        let mut request = self.client.post(self.url()).json(&CompletionRequest {
            model: model_id,
            messages,
            temperature,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&body).map_err(|e| ClientError::Content(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ClientError::Content("response has no message content".into()))
    }
}

/// Wraps a closure as a model; used for scripted responses.
pub struct FnModel<F>(pub F);

impl<F> ChatModel for FnModel<F>
where
    F: Fn(&[ChatMessage]) -> Result<String, ClientError> + Send + Sync,
{
    fn complete(&self, _: &str, messages: &[ChatMessage], _: f64) -> Result<String, ClientError> {
        (self.0)(messages)
    }
}

/// Finds the question in the final user message of an extraction prompt.
pub fn question_in_prompt(messages: &[ChatMessage]) -> Option<&str> {
    let last = messages.iter().rev().find(|m| m.role == Role::User)?;
    let start = last.content.rfind("Question: ")? + "Question: ".len();
    let rest = &last.content[start..];
    Some(rest.split('\n').next().unwrap_or(rest).trim())
}

/// Answers every extraction prompt with the gold sentence list of the
/// question it contains, or `[]` for unknown questions.
pub struct GoldEchoModel {
    gold: HashMap<String, IndexSet>,
    explicit: bool,
}

impl GoldEchoModel {
    /// `gold` maps question text to its gold sentence indices.
    pub fn new(gold: HashMap<String, IndexSet>) -> Self {
        GoldEchoModel {
            gold,
            explicit: false,
        }
    }

    /// Also emit an ANSWERABLE/UNANSWERABLE verdict line.
    pub fn with_verdict(mut self) -> Self {
        self.explicit = true;
        self
    }
}

impl ChatModel for GoldEchoModel {
    fn complete(&self, _: &str, messages: &[ChatMessage], _: f64) -> Result<String, ClientError> {
        let gold = question_in_prompt(messages)
            .and_then(|q| self.gold.get(q))
            .cloned()
            .unwrap_or_default();
        let list = crate::extraction::render_list(&gold);
        if self.explicit {
            let verdict = if gold.is_empty() {
                "UNANSWERABLE"
            } else {
                "ANSWERABLE"
            };
            Ok(format!("{verdict}\n{list}"))
        } else {
            Ok(list)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn retries_only_transport_errors() {
        let calls = AtomicU32::new(0);
        let model = FnModel(|_: &[ChatMessage]| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Transport("reset".into()))
        });
        let policy = RetryPolicy {
            attempts: 3,
            base_delay: Duration::ZERO,
        };
        assert!(complete_with_retry(&model, "m", &[], 0.0, &policy).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let calls = AtomicU32::new(0);
        let model = FnModel(|_: &[ChatMessage]| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(ClientError::Content("bad".into()))
        });
        assert!(complete_with_retry(&model, "m", &[], 0.0, &policy).is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn finds_question_in_last_user_message() {
        let msgs = vec![
            ChatMessage::user("Question: first?\nDocument: x"),
            ChatMessage::assistant("[]"),
            ChatMessage::user("intro\nQuestion: Where is it?\nDocument: [0] a"),
        ];
        assert_eq!(question_in_prompt(&msgs), Some("Where is it?"));
    }

    #[test]
    fn roles_serialize_lowercase() {
        let m = ChatMessage::system("x");
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"role":"system","content":"x"}"#
        );
    }
}
