//! `{name}` placeholder substitution for prompt templates.

use std::fs;
use std::io;
use std::path::Path;

/// Replaces `{key}` placeholders in one pass, so substituted values are
/// never scanned for further placeholders. Unknown placeholders are kept.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (*v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Reads `dir/name` when a directory is given and the file exists,
/// otherwise returns the bundled default.
pub fn load_or_default(dir: Option<&Path>, name: &str, default: &str) -> io::Result<String> {
    match dir.map(|d| d.join(name)) {
        Some(path) if path.exists() => fs::read_to_string(path),
        _ => Ok(default.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_once() {
        let t = "Q: {question} D: {document} {other}";
        let out = fill(t, &[("question", "{document}?"), ("document", "[0] a")]);
        assert_eq!(out, "Q: {document}? D: [0] a {other}");
    }

    #[test]
    fn unmatched_brace_is_literal() {
        assert_eq!(fill("a { b", &[("b", "x")]), "a { b");
        assert_eq!(fill("e.g. {1,2}", &[]), "e.g. {1,2}");
    }
}
