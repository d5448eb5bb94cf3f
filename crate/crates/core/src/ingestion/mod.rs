//! Source document ingestion: fetch CMS pages, strip markup, segment.

mod html;
mod segment;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Document, Language, Sentence};

pub use html::strip_markup;
pub use segment::segment_sentences;

/// Environment variable holding an optional bearer token for the pages API.
pub const PAGES_TOKEN_ENV: &str = "QAFORGE_PAGES_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPage {
    pub url: String,
    pub language: Language,
    pub title: String,
    pub body_markup: String,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("network error fetching {url}: {message}")]
    Network { url: String, message: String },
    #[error("{url} answered with HTTP status {status}")]
    Status { url: String, status: u16 },
    #[error("malformed pages payload from {url}: {message}")]
    Parse { url: String, message: String },
}

impl FetchError {
    pub fn is_retryable(&self) -> bool {
        match self {
            FetchError::Network { .. } => true,
            FetchError::Status { status, .. } => *status >= 500 || *status == 429,
            FetchError::Parse { .. } => false,
        }
    }
}

#[derive(Deserialize)]
struct PagePayload {
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    content: String,
}

/// URL of the pages listing for one language. `{language}` in the endpoint
/// is substituted; otherwise `/<language>/pages` is appended.
pub fn pages_url(endpoint: &str, language: &Language) -> String {
    if endpoint.contains("{language}") {
        endpoint.replace("{language}", language.code())
    } else {
        format!("{}/{}/pages", endpoint.trim_end_matches('/'), language.code())
    }
}

/// Parses a pages-API response body. Titles are decoded to plain text,
/// pages without a body are skipped, and the result is ordered by URL.
pub fn parse_pages(body: &str, url: &str, language: &Language) -> Result<Vec<RawPage>, FetchError> {
    let payload: Vec<PagePayload> = serde_json::from_str(body).map_err(|e| FetchError::Parse {
        url: url.to_string(),
        message: e.to_string(),
    })?;
    let mut pages: Vec<RawPage> = payload
        .into_iter()
        .filter(|p| !p.content.trim().is_empty())
        .map(|p| {
            let page_url = p.url.or(p.path).unwrap_or_default();
            RawPage {
                url: page_url,
                language: language.clone(),
                title: strip_markup(&p.title)
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" "),
                body_markup: p.content,
            }
        })
        .collect();
    pages.sort_by(|a, b| a.url.cmp(&b.url));
    Ok(pages)
}

/// Fetches every page for `language` from a pages endpoint.
pub fn fetch_documents(endpoint: &str, language: &Language) -> Result<Vec<RawPage>, FetchError> {
    let url = pages_url(endpoint, language);
    let client = reqwest::blocking::Client::new();
    let mut request = client.get(&url);
    if let Ok(token) = std::env::var(PAGES_TOKEN_ENV) {
        request = request.bearer_auth(token);
    }
    let response = request.send().map_err(|e| FetchError::Network {
        url: url.clone(),
        message: e.to_string(),
    })?;
    let status = response.status();
    if !status.is_success() {
        return Err(FetchError::Status {
            url,
            status: status.as_u16(),
        });
    }
    let body = response.text().map_err(|e| FetchError::Network {
        url: url.clone(),
        message: e.to_string(),
    })?;
    parse_pages(&body, &url, language)
}

/// Stable document id derived from the page URL.
pub fn document_id_for(url: &str) -> String {
    let digest = Sha256::digest(url.as_bytes());
    hex::encode(&digest[..8])
}

/// Turns a page into a document. The title becomes sentence 0; the body is
/// stripped of markup and segmented. Returns `None` when nothing remains.
pub fn page_to_document(page: &RawPage, source_region: &str) -> Option<Document> {
    let mut texts: Vec<String> = Vec::new();
    let title = page.title.split_whitespace().collect::<Vec<_>>().join(" ");
    if !title.is_empty() {
        texts.push(title);
    }
    let plain = strip_markup(&page.body_markup);
    texts.extend(
        segment_sentences(&plain, &page.language)
            .into_iter()
            .map(|Sentence { text, .. }| text),
    );
    if texts.is_empty() {
        return None;
    }
    Some(Document::from_texts(
        document_id_for(&page.url),
        page.language.clone(),
        page.language.clone(),
        source_region,
        texts,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pages_url_forms() {
        let de = Language::de();
        assert_eq!(
            pages_url("https://cms.example.org/api/v3/augsburg/", &de),
            "https://cms.example.org/api/v3/augsburg/de/pages"
        );
        assert_eq!(
            pages_url("http://h/api/{language}/pages", &de),
            "http://h/api/de/pages"
        );
    }

    #[test]
    fn pages_sorted_and_empty_bodies_dropped() {
        let body = r#"[
            {"url": "https://x/b", "title": "B", "content": "<p>Bee.</p>"},
            {"url": "https://x/a", "title": "A", "content": "<p>Ay.</p>"},
            {"path": "/c", "title": "C", "content": "  "}
        ]"#;
        let pages = parse_pages(body, "u", &Language::en()).unwrap();
        let urls: Vec<&str> = pages.iter().map(|p| p.url.as_str()).collect();
        assert_eq!(urls, vec!["https://x/a", "https://x/b"]);
    }

    #[test]
    fn malformed_payload_is_a_parse_error() {
        let err = parse_pages("{\"not\": \"a list\"}", "u", &Language::en()).unwrap_err();
        assert!(matches!(err, FetchError::Parse { .. }));
        assert!(!err.is_retryable());
    }

    #[test]
    fn page_becomes_document_with_title_sentence() {
        let page = RawPage {
            url: "https://x/frauenhaus".into(),
            language: Language::de(),
            title: "Frauenhaus".into(),
            body_markup: "<h3>Hilfe</h3><p>Das Frauenhaus bietet Schutz. Rufen Sie an!</p>".into(),
        };
        let doc = page_to_document(&page, "Augsburg").unwrap();
        let texts: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(
            texts,
            vec![
                "Frauenhaus",
                "Hilfe",
                "Das Frauenhaus bietet Schutz.",
                "Rufen Sie an!"
            ]
        );
        assert!(doc.validate().is_empty());
        assert_eq!(doc.id, document_id_for("https://x/frauenhaus"));
    }
}
