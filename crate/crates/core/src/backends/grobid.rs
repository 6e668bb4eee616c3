//! GROBID `processCitation` client and TEI `biblStruct` field mapping.

use std::sync::Arc;

use super::cache::{cached, sha256_hex, ResponseCache};
use super::http::{send_with_retry, Body, HttpRequest, RetryPolicy, Transport};
use super::{Backend, BackendError, BackendKind, Mode, ParseAttempt};
use crate::jats::{flatten_text, parse_element, Field, FieldSet, MarkupTree};

pub struct GrobidBackend {
    endpoint: String,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
}

impl GrobidBackend {
    /// `endpoint` is the service root, e.g. `http://localhost:8070`.
    pub fn new(endpoint: &str, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            transport,
            retry,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn request_for(&self, citation: &str) -> HttpRequest {
        HttpRequest::post(
            format!("{}/api/processCitation", self.endpoint),
            Body::Form(vec![
                ("citations".into(), citation.into()),
                ("consolidateCitations".into(), "0".into()),
            ]),
        )
        .header("Accept", "application/xml")
    }
}

impl Backend for GrobidBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Grobid
    }

    fn model(&self) -> &str {
        "grobid"
    }

    fn parse(
        &self,
        citation_id: &str,
        citation: &str,
        _mode: Mode,
        sample_index: usize,
    ) -> Result<ParseAttempt, BackendError> {
        let key = vec![self.endpoint.clone(), sha256_hex(citation)];
        let raw = cached(self.cache.as_ref(), "grobid", &key, || {
            let request = self.request_for(citation);
            send_with_retry(self.transport.as_ref(), &request, &self.retry).map(|r| r.body)
        })?;
        let fields = map_tei(&raw);
        Ok(ParseAttempt::new(
            citation_id,
            BackendKind::Grobid,
            Mode::NotApplicable,
            sample_index,
            raw,
            fields,
        ))
    }
}

fn child<'a>(tree: &'a MarkupTree, name: &str) -> Option<&'a MarkupTree> {
    tree.elements().find(|e| e.name == name)
}

fn first_surname(section: &MarkupTree) -> Option<String> {
    section
        .elements()
        .filter(|e| e.name == "author" || e.name == "editor")
        .find_map(|a| a.find_first("surname"))
        .map(flatten_text)
}

fn titled<'a>(section: &'a MarkupTree, level: &str) -> Option<&'a MarkupTree> {
    section
        .elements()
        .find(|e| e.name == "title" && e.attribute("level") == Some(level))
}

fn leading_year(s: &str) -> Option<&str> {
    let bytes = s.as_bytes();
    (bytes.len() >= 4 && bytes[..4].iter().all(u8::is_ascii_digit)).then(|| &s[..4])
}

fn first_page(scope: &MarkupTree) -> Option<String> {
    if let Some(from) = scope.attribute("from") {
        return Some(from.to_owned());
    }
    let text = flatten_text(scope);
    let first = text.split(['-', '–', '—']).next().unwrap_or("").trim();
    (!first.is_empty()).then(|| first.to_owned())
}

/// Maps a GROBID TEI response to scored fields. `None` means the response
/// carries no bibliographic structure.
pub fn map_tei(raw: &str) -> Option<FieldSet> {
    let bibl = parse_element(raw, "biblStruct").ok()?;
    let analytic = child(&bibl, "analytic");
    let monogr = child(&bibl, "monogr");

    let mut fields = FieldSet::default();
    if let Some(analytic) = analytic {
        let title = titled(analytic, "a").or_else(|| child(analytic, "title"));
        fields.set(Field::ArticleTitle, title.map(flatten_text).as_deref());
    }
    let surname = analytic
        .and_then(first_surname)
        .or_else(|| monogr.and_then(first_surname));
    fields.set(Field::Surname, surname.as_deref());

    if let Some(monogr) = monogr {
        let source = titled(monogr, "j")
            .or_else(|| titled(monogr, "m"))
            .or_else(|| child(monogr, "title"));
        fields.set(Field::Source, source.map(flatten_text).as_deref());

        if let Some(imprint) = child(monogr, "imprint") {
            for scope in imprint.elements().filter(|e| e.name == "biblScope") {
                let unit = scope.attribute("unit").unwrap_or_default();
                let value = match unit {
                    "volume" | "issue" => scope
                        .attribute("from")
                        .map(str::to_owned)
                        .or_else(|| Some(flatten_text(scope))),
                    "page" => first_page(scope),
                    _ => None,
                };
                let field = match unit {
                    "volume" => Field::Volume,
                    "issue" => Field::Issue,
                    "page" => Field::Fpage,
                    _ => {
                        log::warn!("unmapped TEI biblScope unit {unit:?}");
                        continue;
                    }
                };
                if value.is_none() {
                    log::warn!("TEI biblScope {unit:?} has no usable value");
                }
                if fields.get(field).is_none() {
                    fields.set(field, value.as_deref());
                }
            }
            for date in imprint.elements().filter(|e| e.name == "date") {
                let year = date
                    .attribute("when")
                    .and_then(leading_year)
                    .map(str::to_owned)
                    .or_else(|| {
                        let text = flatten_text(date);
                        leading_year(&text).map(str::to_owned)
                    });
                match year {
                    Some(y) => {
                        fields.set(Field::Year, Some(&y));
                        break;
                    }
                    None => log::warn!("TEI date without a parseable year"),
                }
            }
        }
    }

    (!fields.is_empty()).then_some(fields)
}
