//! JATS `mixed-citation` handling: a small generic element tree, text
//! flattening, and extraction of the scored citation fields.
//!
//! Parsing is well-formedness only. No DTD or schema is consulted, the five
//! predefined entities and numeric character references are resolved, and any
//! other entity reference is kept verbatim in the text.

use std::fmt;
use std::ops::Range;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::text::{non_empty, normalize_whitespace};

pub const MIXED_CITATION: &str = "mixed-citation";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JatsError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
}

/// A child of an element: either character data or a nested element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Node {
    Text(String),
    Element(MarkupTree),
}

/// Generic XML element with ordered attributes and mixed content.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MarkupTree {
    pub name: String,
    pub attributes: Vec<(String, String)>,
    pub children: Vec<Node>,
}

impl MarkupTree {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            attributes: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }

    /// Child elements, skipping text nodes.
    pub fn elements(&self) -> impl Iterator<Item = &MarkupTree> {
        self.children.iter().filter_map(|c| match c {
            Node::Element(e) => Some(e),
            Node::Text(_) => None,
        })
    }

    /// Pre-order traversal starting with `self`.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    /// First element (self included) named `name` in document order.
    pub fn find_first(&self, name: &str) -> Option<&MarkupTree> {
        self.descendants().find(|e| e.name == name)
    }

    /// Concatenation of all text nodes in document order, unnormalized.
    pub fn raw_text(&self) -> String {
        let mut out = String::new();
        collect_text(self, &mut out);
        out
    }

    /// Serializes back to XML. Text and attribute values are escaped so that
    /// parsing the result reproduces this tree.
    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        write_xml(self, &mut out);
        out
    }

    fn push_text(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Node::Text(last)) = self.children.last_mut() {
            last.push_str(text);
        } else {
            self.children.push(Node::Text(text.to_owned()));
        }
    }
}

impl fmt::Display for MarkupTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_xml())
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a MarkupTree>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a MarkupTree;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        let start = self.stack.len();
        self.stack.extend(node.elements());
        self.stack[start..].reverse();
        Some(node)
    }
}

fn collect_text(tree: &MarkupTree, out: &mut String) {
    for child in &tree.children {
        match child {
            Node::Text(t) => out.push_str(t),
            Node::Element(e) => collect_text(e, out),
        }
    }
}

fn write_xml(tree: &MarkupTree, out: &mut String) {
    out.push('<');
    out.push_str(&tree.name);
    for (k, v) in &tree.attributes {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape_into(v, true, out);
        out.push('"');
    }
    if tree.children.is_empty() {
        out.push_str("/>");
        return;
    }
    out.push('>');
    for child in &tree.children {
        match child {
            Node::Text(t) => escape_into(t, false, out),
            Node::Element(e) => write_xml(e, out),
        }
    }
    out.push_str("</");
    out.push_str(&tree.name);
    out.push('>');
}

fn escape_into(s: &str, attribute: bool, out: &mut String) {
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' if attribute => out.push_str("&quot;"),
            '\r' => out.push_str("&#13;"),
            '\t' if attribute => out.push_str("&#9;"),
            '\n' if attribute => out.push_str("&#10;"),
            c => out.push(c),
        }
    }
}

fn predefined_entity(name: &str) -> Option<char> {
    Some(match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        _ => return None,
    })
}

fn char_reference(body: &str) -> Option<char> {
    let code = if let Some(hex) = body.strip_prefix("#x") {
        u32::from_str_radix(hex, 16).ok()?
    } else {
        body.strip_prefix('#')?.parse::<u32>().ok()?
    };
    char::from_u32(code).filter(|&c| c != '\0')
}

/// Resolves references in raw character data (attribute values). Unknown
/// named entities, and stray ampersands, are kept as written.
fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        let tail = &rest[amp..];
        let resolved = tail[1..].find(';').and_then(|semi| {
            let body = &tail[1..1 + semi];
            predefined_entity(body)
                .or_else(|| char_reference(body))
                .map(|c| (c, semi + 2))
        });
        match resolved {
            Some((c, len)) => {
                out.push(c);
                rest = &tail[len..];
            }
            None => {
                out.push('&');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn malformed(msg: impl Into<String>) -> JatsError {
    JatsError::MalformedXml(msg.into())
}

fn open_element(start: &BytesStart<'_>) -> Result<MarkupTree, JatsError> {
    let name = std::str::from_utf8(start.name().as_ref())
        .map_err(|e| malformed(e.to_string()))?
        .to_owned();
    let mut tree = MarkupTree::new(name);
    for attr in start.attributes().with_checks(true) {
        let attr = attr.map_err(|e| malformed(e.to_string()))?;
        let key = std::str::from_utf8(attr.key.as_ref())
            .map_err(|e| malformed(e.to_string()))?
            .to_owned();
        let raw = std::str::from_utf8(&attr.value).map_err(|e| malformed(e.to_string()))?;
        tree.attributes.push((key, unescape(raw)));
    }
    Ok(tree)
}

/// Parses exactly one element starting at byte offset `start` of `text`,
/// which must point at its `<`. Returns the tree and the byte range it spans.
fn parse_element_at(text: &str, start: usize) -> Result<(MarkupTree, Range<usize>), JatsError> {
    let mut reader = Reader::from_str(&text[start..]);
    let config = reader.config_mut();
    config.check_end_names = true;
    config.trim_text(false);

    let mut stack: Vec<MarkupTree> = Vec::new();
    loop {
        let event = reader.read_event().map_err(|e| {
            malformed(format!(
                "at byte {}: {e}",
                start as u64 + reader.error_position()
            ))
        })?;
        let finished = match event {
            Event::Start(s) => {
                stack.push(open_element(&s)?);
                None
            }
            Event::Empty(s) => {
                let el = open_element(&s)?;
                match stack.last_mut() {
                    Some(parent) => {
                        parent.children.push(Node::Element(el));
                        None
                    }
                    None => Some(el),
                }
            }
            Event::End(_) => {
                let el = stack
                    .pop()
                    .ok_or_else(|| malformed("unexpected closing tag"))?;
                match stack.last_mut() {
                    Some(parent) => {
                        parent.children.push(Node::Element(el));
                        None
                    }
                    None => Some(el),
                }
            }
            Event::Text(t) => {
                let s = t.decode().map_err(|e| malformed(e.to_string()))?;
                match stack.last_mut() {
                    Some(top) => top.push_text(&s),
                    None => return Err(malformed("text before root element")),
                }
                None
            }
            Event::CData(t) => {
                let s = t.decode().map_err(|e| malformed(e.to_string()))?;
                match stack.last_mut() {
                    Some(top) => top.push_text(&s),
                    None => return Err(malformed("CDATA before root element")),
                }
                None
            }
            Event::GeneralRef(r) => {
                let body = r.decode().map_err(|e| malformed(e.to_string()))?;
                let top = stack
                    .last_mut()
                    .ok_or_else(|| malformed("reference before root element"))?;
                if r.is_char_ref() {
                    let ch = char_reference(&body).ok_or_else(|| {
                        malformed(format!("invalid character reference &{body};"))
                    })?;
                    top.push_text(ch.encode_utf8(&mut [0; 4]));
                } else if let Some(ch) = predefined_entity(&body) {
                    top.push_text(ch.encode_utf8(&mut [0; 4]));
                } else {
                    top.push_text(&format!("&{body};"));
                }
                None
            }
            Event::Comment(_) | Event::PI(_) => None,
            Event::Decl(_) | Event::DocType(_) => {
                return Err(malformed("declaration inside element"));
            }
            Event::Eof => return Err(malformed("unexpected end of input, element not closed")),
        };
        if let Some(root) = finished {
            let end = start + reader.buffer_position() as usize;
            return Ok((root, start..end));
        }
    }
}

/// Byte offsets of every `<name` start tag in `text`.
fn start_tag_offsets<'a>(text: &'a str, name: &'a str) -> impl Iterator<Item = usize> + 'a {
    let needle_len = name.len() + 1;
    text.match_indices('<').filter_map(move |(i, _)| {
        let after = &text[i + 1..];
        if !after.starts_with(name) {
            return None;
        }
        match text[i + needle_len..].chars().next() {
            Some(c) if c.is_whitespace() || c == '>' || c == '/' => Some(i),
            _ => None,
        }
    })
}

/// Parses the first well-formed `<name>` element in `text`.
pub fn parse_element(text: &str, name: &str) -> Result<MarkupTree, JatsError> {
    let mut last_err = None;
    for offset in start_tag_offsets(text, name) {
        match parse_element_at(text, offset) {
            Ok((tree, _)) => return Ok(tree),
            Err(e) => last_err = Some(e),
        }
    }
    Err(match last_err {
        Some(JatsError::MalformedXml(msg)) => {
            malformed(format!("no well-formed <{name}> element ({msg})"))
        }
        None => malformed(format!("no <{name}> element found")),
    })
}

/// Every top-level `<name>` element in `text`, in order, with its source span.
/// Malformed occurrences are reported in place rather than aborting the scan.
pub fn find_elements(text: &str, name: &str) -> Vec<Result<(MarkupTree, Range<usize>), JatsError>> {
    let mut out = Vec::new();
    let mut consumed = 0;
    for offset in start_tag_offsets(text, name) {
        if offset < consumed {
            continue;
        }
        let parsed = parse_element_at(text, offset);
        if let Ok((_, span)) = &parsed {
            consumed = span.end;
        }
        out.push(parsed);
    }
    out
}

/// Parses the first well-formed `<mixed-citation>` element in `xml_text`.
pub fn parse_markup(xml_text: &str) -> Result<MarkupTree, JatsError> {
    parse_element(xml_text, MIXED_CITATION)
}

/// Text-only rendering of a citation tree, whitespace-normalized.
pub fn flatten_text(tree: &MarkupTree) -> String {
    normalize_whitespace(&tree.raw_text())
}

/// Removes reasoning blocks from a model response. An unterminated `<think>`
/// swallows the rest of the text; a close tag with no opener (the opener
/// lived in the prompt template) drops everything before it.
pub fn strip_think_blocks(response: &str) -> String {
    const OPEN: &str = "<think>";
    const CLOSE: &str = "</think>";
    let mut rest = response;
    if let Some(close) = rest.find(CLOSE) {
        if !rest[..close].contains(OPEN) {
            rest = &rest[close + CLOSE.len()..];
        }
    }
    let mut out = String::with_capacity(rest.len());
    while let Some(open) = rest.find(OPEN) {
        out.push_str(&rest[..open]);
        match rest[open..].find(CLOSE) {
            Some(close) => rest = &rest[open + close + CLOSE.len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Locates and parses the citation annotation inside a full backend
/// response. `None` means the response did not contain valid markup.
pub fn validate_citation_xml(raw_response: &str) -> Option<MarkupTree> {
    parse_markup(&strip_think_blocks(raw_response)).ok()
}

/// The citation sub-elements that are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    ArticleTitle,
    Issue,
    Volume,
    Source,
    Year,
    Fpage,
    Surname,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::ArticleTitle,
        Field::Issue,
        Field::Volume,
        Field::Source,
        Field::Year,
        Field::Fpage,
        Field::Surname,
    ];

    /// The JATS element carrying this field.
    pub fn element_name(self) -> &'static str {
        match self {
            Field::ArticleTitle => "article-title",
            Field::Issue => "issue",
            Field::Volume => "volume",
            Field::Source => "source",
            Field::Year => "year",
            Field::Fpage => "fpage",
            Field::Surname => "surname",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.element_name())
    }
}

/// Scored fields of one citation. Present values are whitespace-normalized
/// and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surname: Option<String>,
}

impl FieldSet {
    pub fn get(&self, field: Field) -> Option<&str> {
        self.slot(field).as_deref()
    }

    /// Stores a value after normalization; blank values clear the field.
    pub fn set(&mut self, field: Field, value: Option<&str>) {
        *self.slot_mut(field) = value.and_then(non_empty);
    }

    pub fn with(mut self, field: Field, value: &str) -> Self {
        self.set(field, Some(value));
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Field, &str)> {
        Field::ALL
            .into_iter()
            .filter_map(move |f| self.get(f).map(|v| (f, v)))
    }

    pub fn is_empty(&self) -> bool {
        self.iter().next().is_none()
    }

    fn slot(&self, field: Field) -> &Option<String> {
        match field {
            Field::ArticleTitle => &self.article_title,
            Field::Issue => &self.issue,
            Field::Volume => &self.volume,
            Field::Source => &self.source,
            Field::Year => &self.year,
            Field::Fpage => &self.fpage,
            Field::Surname => &self.surname,
        }
    }

    fn slot_mut(&mut self, field: Field) -> &mut Option<String> {
        match field {
            Field::ArticleTitle => &mut self.article_title,
            Field::Issue => &mut self.issue,
            Field::Volume => &mut self.volume,
            Field::Source => &mut self.source,
            Field::Year => &mut self.year,
            Field::Fpage => &mut self.fpage,
            Field::Surname => &mut self.surname,
        }
    }
}

/// First occurrence, in document order, of each scored element.
pub fn extract_fields(tree: &MarkupTree) -> FieldSet {
    let mut fields = FieldSet::default();
    for field in Field::ALL {
        let text = tree.find_first(field.element_name()).map(flatten_text);
        fields.set(field, text.as_deref());
    }
    fields
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Pkp,
    Ore,
    Other,
}

impl Corpus {
    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Pkp => "pkp",
            Corpus::Ore => "ore",
            Corpus::Other => "other",
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Corpus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pkp" => Ok(Corpus::Pkp),
            "ore" => Ok(Corpus::Ore),
            "other" => Ok(Corpus::Other),
            other => Err(format!("unknown corpus {other:?}")),
        }
    }
}

/// One citation with both its plaintext and its marked-up form.
#[derive(Debug, Clone, PartialEq)]
pub struct CitationRecord {
    pub id: String,
    pub corpus: Corpus,
    pub article_id: String,
    pub plaintext: String,
    pub markup_xml: String,
    pub markup_tree: MarkupTree,
    pub label_fields: FieldSet,
}

impl CitationRecord {
    pub fn new(
        id: impl Into<String>,
        corpus: Corpus,
        article_id: impl Into<String>,
        plaintext: &str,
        markup_xml: impl Into<String>,
    ) -> Result<Self, JatsError> {
        let markup_xml = markup_xml.into();
        let markup_tree = parse_markup(&markup_xml)?;
        let label_fields = extract_fields(&markup_tree);
        Ok(Self {
            id: id.into(),
            corpus,
            article_id: article_id.into(),
            plaintext: normalize_whitespace(plaintext),
            markup_xml,
            markup_tree,
            label_fields,
        })
    }
}
