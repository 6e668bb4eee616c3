//! Plaintext reference lists from article markdown, checked against the
//! source text so fabricated lines never reach the dataset.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::cache::{cached, sha256_hex, ResponseCache};
use crate::backends::chat::ChatClient;
use crate::backends::BackendError;
use crate::jats::MarkupTree;
use crate::text::normalize_whitespace;

pub use crate::backends::prompts::{build_extraction_prompt, EXTRACTION_SYSTEM_PROMPT};

static LIST_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:[-*]|\d+\.)(?:\s+|$)").unwrap());

#[derive(Debug, Clone, PartialEq)]
pub struct ArticleDocument {
    pub article_id: String,
    pub markdown: String,
    /// `mixed-citation` elements from the article's JATS reference list.
    pub jats_citations: Vec<MarkupTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub article_id: String,
    pub citations: Vec<String>,
    /// Lines that did not appear in the article text.
    pub rejected: Vec<String>,
}

/// One citation per non-empty line, whitespace-normalized, with bullet and
/// `N.` list markers removed.
pub fn parse_extraction_response(text: &str) -> Vec<String> {
    text.lines()
        .map(normalize_whitespace)
        .map(|line| match LIST_MARKER.find(&line) {
            Some(m) => line[m.end()..].to_owned(),
            None => line,
        })
        .filter(|line| !line.is_empty())
        .collect()
}

/// Splits `citations` into those whose normalized text occurs in the
/// normalized `markdown` and those that do not. Order is preserved.
pub fn verify_citations(citations: &[String], markdown: &str) -> (Vec<String>, Vec<String>) {
    let haystack = normalize_whitespace(markdown);
    let mut verified = Vec::new();
    let mut rejected = Vec::new();
    for citation in citations {
        let needle = normalize_whitespace(citation);
        if !needle.is_empty() && haystack.contains(&needle) {
            verified.push(needle);
        } else {
            rejected.push(needle);
        }
    }
    (verified, rejected)
}

/// Builds a result from citation lines without calling a model, as when a
/// corpus ships its own plaintext reference lists.
pub fn result_from_lines(article_id: &str, lines: &str, markdown: &str) -> ExtractionResult {
    let (citations, rejected) = verify_citations(&parse_extraction_response(lines), markdown);
    ExtractionResult {
        article_id: article_id.to_owned(),
        citations,
        rejected,
    }
}

pub fn extract_article(
    client: &dyn ChatClient,
    model: &str,
    doc: &ArticleDocument,
    cache: Option<&ResponseCache>,
) -> Result<ExtractionResult, BackendError> {
    if doc.markdown.trim().is_empty() {
        return Err(BackendError::InvalidConfig(format!(
            "article {} has empty markdown",
            doc.article_id
        )));
    }
    let request = build_extraction_prompt(model, &doc.markdown);
    let key = vec![model.to_owned(), sha256_hex(&doc.markdown)];
    let raw = cached(cache, "extraction", &key, || {
        client.complete(&request).map(|r| r.text)
    })?;
    Ok(result_from_lines(&doc.article_id, &raw, &doc.markdown))
}
