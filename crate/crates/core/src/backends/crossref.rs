//! Crossref bibliographic search as a parsing baseline: the top search hit's
//! metadata stands in for the parsed citation.

use std::sync::Arc;

use serde_json::Value;

use super::cache::{cached, sha256_hex, ResponseCache};
use super::http::{send_with_retry, HttpRequest, RetryPolicy, Transport};
use super::{Backend, BackendError, BackendKind, Mode, ParseAttempt};
use crate::jats::{Field, FieldSet};

pub const DEFAULT_ENDPOINT: &str = "https://api.crossref.org";
pub const MAILTO_ENV: &str = "CITEGAUGE_CROSSREF_MAILTO";

pub struct CrossrefBackend {
    endpoint: String,
    mailto: Option<String>,
    min_score: Option<f64>,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
}

impl CrossrefBackend {
    pub fn new(endpoint: &str, transport: Arc<dyn Transport>, retry: RetryPolicy) -> Self {
        let endpoint = if endpoint.is_empty() {
            DEFAULT_ENDPOINT
        } else {
            endpoint
        };
        Self {
            endpoint: endpoint.trim_end_matches('/').to_owned(),
            mailto: None,
            min_score: None,
            transport,
            retry,
            cache: None,
        }
    }

    /// Hits scoring at or below `min_score` count as not covered.
    pub fn with_min_score(mut self, min_score: Option<f64>) -> Self {
        self.min_score = min_score;
        self
    }

    pub fn with_mailto(mut self, mailto: Option<String>) -> Self {
        self.mailto = mailto;
        self
    }

    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn request_for(&self, citation: &str) -> HttpRequest {
        let mut req = HttpRequest::get(format!("{}/works", self.endpoint))
            .query("query.bibliographic", citation)
            .query("rows", "1");
        if let Some(mailto) = &self.mailto {
            req = req.query("mailto", mailto.as_str());
        }
        req
    }
}

impl Backend for CrossrefBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Crossref
    }

    fn model(&self) -> &str {
        "crossref"
    }

    fn parse(
        &self,
        citation_id: &str,
        citation: &str,
        _mode: Mode,
        sample_index: usize,
    ) -> Result<ParseAttempt, BackendError> {
        // the threshold is applied after the fact, so it stays out of the key
        let key = vec![self.endpoint.clone(), sha256_hex(citation)];
        let raw = cached(self.cache.as_ref(), "crossref", &key, || {
            let request = self.request_for(citation);
            send_with_retry(self.transport.as_ref(), &request, &self.retry).map(|r| r.body)
        })?;
        let hit = top_hit(&raw);
        let score = hit.as_ref().and_then(|h| h.score);
        let fields = hit.and_then(|h| accept(h, self.min_score));
        let mut attempt = ParseAttempt::new(
            citation_id,
            BackendKind::Crossref,
            Mode::NotApplicable,
            sample_index,
            raw,
            fields,
        );
        attempt.score = score;
        Ok(attempt)
    }
}

/// The first search result: its relevance score and mapped metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossrefHit {
    pub score: Option<f64>,
    pub fields: FieldSet,
}

fn first_string(item: &Value, key: &str) -> Option<String> {
    match item.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Array(a) => a.first().and_then(Value::as_str).map(str::to_owned),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn year_of(item: &Value) -> Option<String> {
    ["issued", "published-print", "published-online", "published"]
        .iter()
        .find_map(|k| item.get(*k)?.pointer("/date-parts/0/0")?.as_i64())
        .map(|y| y.to_string())
}

/// Maps one Crossref work item to scored fields.
pub fn map_item(item: &Value) -> FieldSet {
    let mut fields = FieldSet::default();
    fields.set(Field::ArticleTitle, first_string(item, "title").as_deref());
    fields.set(
        Field::Source,
        first_string(item, "container-title").as_deref(),
    );
    fields.set(Field::Volume, first_string(item, "volume").as_deref());
    fields.set(Field::Issue, first_string(item, "issue").as_deref());
    let fpage = first_string(item, "page").map(|p| {
        p.split(['-', '–'])
            .next()
            .unwrap_or_default()
            .trim()
            .to_owned()
    });
    fields.set(Field::Fpage, fpage.as_deref());
    let surname = item
        .get("author")
        .and_then(Value::as_array)
        .and_then(|authors| {
            authors
                .iter()
                .find(|a| a.get("sequence").and_then(Value::as_str) == Some("first"))
                .or_else(|| authors.first())
        })
        .and_then(|a| a.get("family").or_else(|| a.get("name")))
        .and_then(Value::as_str)
        .map(str::to_owned);
    fields.set(Field::Surname, surname.as_deref());
    fields.set(Field::Year, year_of(item).as_deref());
    fields
}

/// Top item of a `/works` search response, if any.
pub fn top_hit(raw: &str) -> Option<CrossrefHit> {
    let v: Value = serde_json::from_str(raw).ok()?;
    let item = v.pointer("/message/items/0")?;
    Some(CrossrefHit {
        score: item.get("score").and_then(Value::as_f64),
        fields: map_item(item),
    })
}

/// Applies the confidence filter: a hit is kept only when its score is
/// strictly greater than `min_score`.
pub fn accept(hit: CrossrefHit, min_score: Option<f64>) -> Option<FieldSet> {
    match (min_score, hit.score) {
        (None, _) => Some(hit.fields),
        (Some(min), Some(score)) if score > min => Some(hit.fields),
        (Some(_), _) => None,
    }
}
