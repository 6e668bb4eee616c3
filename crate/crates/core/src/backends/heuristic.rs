//! Rule-based citation parser. It needs no network and serves as the
//! offline baseline; every field it reports is a substring of the input.

use std::sync::LazyLock;

use regex::Regex;

use super::{Backend, BackendError, BackendKind, Mode, ParseAttempt};
use crate::jats::{Field, FieldSet};
use crate::text::normalize_whitespace;

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(1[5-9]\d{2}|20\d{2})\b").unwrap());

// [volume](issue[ suppl]): fpage[-lpage]
static VOLUME_ISSUE_PAGES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:\b(\d+)\s*)?\(\s*(\d+)[^)]*\)\s*:\s*([A-Za-z]?\d+)(?:\s*[-–—]\s*[A-Za-z]?\d+)?")
        .unwrap()
});

// volume: fpage-lpage
static VOLUME_PAGES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(\d+)\s*:\s*([A-Za-z]?\d+)\s*[-–—]\s*[A-Za-z]?\d+").unwrap());

// "Surname AB," / "Surname, A."
static LEAD_AUTHOR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([\p{Lu}][\p{L}'’\-]+),?\s+\p{Lu}[\p{Lu}.\-]{0,5}(?:[\s,.:;]|$)").unwrap()
});

static CLAUSE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.:]+\s+").unwrap());

static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.?!]+\s+").unwrap());

static SINGLE_INITIAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)\p{Lu}$").unwrap());

static NEXT_INITIAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\p{Lu}\.").unwrap());

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicBackend;

impl Backend for HeuristicBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Heuristic
    }

    fn model(&self) -> &str {
        "heuristic"
    }

    fn parse(
        &self,
        citation_id: &str,
        citation: &str,
        _mode: Mode,
        sample_index: usize,
    ) -> Result<ParseAttempt, BackendError> {
        let mut attempt = heuristic_parse(citation);
        attempt.citation_id = citation_id.to_owned();
        attempt.sample_index = sample_index;
        Ok(attempt)
    }
}

struct Locator {
    start: usize,
    volume: Option<String>,
    issue: Option<String>,
    fpage: String,
}

fn locate_volume(text: &str) -> Option<Locator> {
    if let Some(c) = VOLUME_ISSUE_PAGES.captures_iter(text).last() {
        return Some(Locator {
            start: c.get(0).unwrap().start(),
            volume: c.get(1).map(|m| m.as_str().to_owned()),
            issue: Some(c[2].to_owned()),
            fpage: c[3].to_owned(),
        });
    }
    VOLUME_PAGES.captures_iter(text).last().map(|c| Locator {
        start: c.get(0).unwrap().start(),
        volume: Some(c[1].to_owned()),
        issue: None,
        fpage: c[2].to_owned(),
    })
}

/// End of the author list: the first clause break that does not sit between
/// two initials.
fn author_block_end(text: &str, from: usize) -> Option<usize> {
    CLAUSE_END
        .find_iter(&text[from..])
        .find(|m| {
            !(SINGLE_INITIAL.is_match(&text[from..from + m.start()])
                && NEXT_INITIAL.is_match(&text[from + m.end()..]))
        })
        .map(|m| from + m.end())
}

fn trim_segment(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';' | ':'))
}

pub fn heuristic_parse(citation: &str) -> ParseAttempt {
    let text = normalize_whitespace(citation);
    let mut fields = FieldSet::default();

    let locator = locate_volume(&text);
    let years: Vec<_> = YEAR.find_iter(&text).collect();
    let year = match &locator {
        Some(loc) => years
            .iter()
            .rev()
            .find(|m| m.end() <= loc.start)
            .or(years.last()),
        None => years.last(),
    };
    fields.set(Field::Year, year.map(|m| m.as_str()));
    if let Some(loc) = &locator {
        fields.set(Field::Volume, loc.volume.as_deref());
        fields.set(Field::Issue, loc.issue.as_deref());
        fields.set(Field::Fpage, Some(&loc.fpage));
    }

    if let Some(author) = LEAD_AUTHOR.captures(&text) {
        fields.set(Field::Surname, Some(&author[1]));
        if let Some(body_start) = author_block_end(&text, author.get(1).unwrap().end()) {
            let body_end = [year.map(|m| m.start()), locator.as_ref().map(|l| l.start)]
                .into_iter()
                .flatten()
                .filter(|&p| p > body_start)
                .min()
                .unwrap_or(text.len());
            let segments: Vec<&str> = SENTENCE_END
                .split(&text[body_start..body_end])
                .map(trim_segment)
                .filter(|s| !s.is_empty())
                .collect();
            match segments.as_slice() {
                [] => {}
                [only] => fields.set(Field::ArticleTitle, Some(only)),
                [init @ .., last] => {
                    let title = init.iter().max_by_key(|s| s.chars().count()).unwrap();
                    fields.set(Field::ArticleTitle, Some(title));
                    fields.set(Field::Source, Some(last));
                }
            }
        }
    }

    ParseAttempt::new(
        "",
        BackendKind::Heuristic,
        Mode::NotApplicable,
        0,
        citation.to_owned(),
        Some(fields),
    )
}
