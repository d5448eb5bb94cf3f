//! Ingestion against a local pages-API stand-in replaying a recorded response.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;

use qaforge_core::corpus::Language;
use qaforge_core::ingestion::{fetch_documents, page_to_document, FetchError};
use serde::Deserialize;

const RECORDED: &str = include_str!("fixtures/pages_de.json");
const EXPECTED: &str = include_str!("fixtures/pages_de.expected.json");

/// Serves `routes` (path, status, body) for `requests` connections.
fn serve(routes: Vec<(&'static str, u16, String)>, requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("/");
            let (status, body) = routes
                .iter()
                .find(|(p, _, _)| *p == path)
                .map(|(_, s, b)| (*s, b.clone()))
                .unwrap_or((404, "{\"detail\": \"not found\"}".into()));
            let reason = if status == 200 { "OK" } else { "Not Found" };
            write!(
                stream,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    format!("http://{addr}")
}

#[derive(Deserialize)]
struct ExpectedPage {
    url: String,
    title: String,
    sentences: Vec<String>,
}

#[test]
fn recorded_response_matches_capture() {
    let base = serve(vec![("/api/augsburg/de/pages", 200, RECORDED.to_string())], 1);
    let pages = fetch_documents(&format!("{base}/api/augsburg"), &Language::de()).unwrap();
    let expected: Vec<ExpectedPage> = serde_json::from_str(EXPECTED).unwrap();
    assert_eq!(pages.len(), expected.len(), "the empty page is dropped");
    for (page, want) in pages.iter().zip(&expected) {
        assert_eq!(page.url, want.url);
        assert_eq!(page.title, want.title);
        let doc = page_to_document(page, "Augsburg").unwrap();
        let got: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(got, want.sentences, "{}", page.url);
        assert!(doc.validate().is_empty());
    }
}

#[test]
fn three_pages_sorted_by_url() {
    let body = r#"[
        {"url": "https://x/c", "title": "C", "content": "<p>Drei.</p>"},
        {"url": "https://x/a", "title": "A", "content": "<p>Eins.</p>"},
        {"url": "https://x/b", "title": "B", "content": "<p>Zwei.</p>"}
    ]"#;
    let base = serve(vec![("/de/pages", 200, body.to_string())], 1);
    let pages = fetch_documents(&base, &Language::de()).unwrap();
    let urls: Vec<&str> = pages.iter().map(|p| p.url.as_str()).collect();
    assert_eq!(urls, ["https://x/a", "https://x/b", "https://x/c"]);
}

#[test]
fn not_found_is_a_status_error() {
    let base = serve(vec![], 1);
    match fetch_documents(&base, &Language::en()) {
        Err(FetchError::Status { status, .. }) => assert_eq!(status, 404),
        other => panic!("expected status error, got {other:?}"),
    }
}

#[test]
fn malformed_payload_is_a_parse_error() {
    let base = serve(vec![("/de/pages", 200, "<html>maintenance</html>".into())], 1);
    assert!(matches!(
        fetch_documents(&base, &Language::de()),
        Err(FetchError::Parse { .. })
    ));
}

#[test]
fn unreachable_endpoint_is_retryable() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = fetch_documents(&format!("http://{addr}"), &Language::de()).unwrap_err();
    assert!(err.is_retryable(), "{err}");
}
