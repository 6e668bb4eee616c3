//! Dataset construction: corpus inventory, reference extraction, matching,
//! and per-corpus sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use citegauge::backends::cache::ResponseCache;
use citegauge::backends::chat::{ChatClient, HttpChatClient};
use citegauge::backends::http::UreqTransport;
use citegauge::backends::map_bounded;
use citegauge::extraction::{
    extract_article, result_from_lines, verify_citations, ArticleDocument,
};
use citegauge::io::{read_jsonl, write_json, write_jsonl};
use citegauge::jats::{find_elements, flatten_text};
use citegauge::matching::{greedy_match, sample_dataset, DatasetEntry, MatchedPair};
use citegauge::{CitationRecord, Corpus, MarkupTree};
use serde::{Deserialize, Serialize};

use crate::config::{CorpusConfig, RunConfig};
use crate::error::{CliError, IoContext};

pub const INVENTORY: &str = "inventory.jsonl";
pub const EXTRACTION: &str = "extraction.jsonl";
pub const MATCHES: &str = "matches.jsonl";
pub const MATCH_SUMMARY: &str = "match_summary.json";
pub const DATASET: &str = "dataset.jsonl";

const USER_AGENT: &str = concat!("citegauge/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryRow {
    pub corpus: Corpus,
    pub article_id: String,
    /// Well-formed `mixed-citation` elements in the JATS file.
    pub citations: usize,
    /// `mixed-citation` start tags that did not parse.
    pub malformed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRow {
    pub corpus: Corpus,
    pub article_id: String,
    pub citations: Vec<String>,
    pub rejected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMatchSummary {
    pub articles: usize,
    pub plaintext_citations: usize,
    pub markup_citations: usize,
    pub matches: usize,
    pub mean_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub threshold: f64,
    #[serde(flatten)]
    pub total: CorpusMatchSummary,
    pub corpora: BTreeMap<Corpus, CorpusMatchSummary>,
}

fn xml_path(corpus: &CorpusConfig, article_id: &str) -> PathBuf {
    corpus.dir.join(format!("{article_id}.xml"))
}

fn md_path(corpus: &CorpusConfig, article_id: &str) -> PathBuf {
    corpus.dir.join(format!("{article_id}.md"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::MissingInput {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn load<T: serde::de::DeserializeOwned>(out_dir: &Path, name: &str) -> Result<Vec<T>, CliError> {
    let path = out_dir.join(name);
    if !path.exists() {
        return Err(CliError::MissingInput {
            path,
            message: "not found; run the earlier pipeline step first".into(),
        });
    }
    read_jsonl(&path).at(&path)
}

fn corpus_config(config: &RunConfig, name: Corpus) -> Result<&CorpusConfig, CliError> {
    config
        .corpus(name)
        .ok_or_else(|| CliError::Config(format!("corpus {name} is not configured")))
}

/// Scans one corpus directory for `<id>.xml` / `<id>.md` pairs.
pub fn scan_corpus(corpus: &CorpusConfig) -> Result<Vec<InventoryRow>, CliError> {
    let entries = fs::read_dir(&corpus.dir).at(&corpus.dir)?;
    let mut xml = BTreeSet::new();
    let mut md = BTreeSet::new();
    for entry in entries {
        let path = entry.at(&corpus.dir)?.path();
        let (Some(stem), Some(ext)) = (path.file_stem(), path.extension()) else {
            continue;
        };
        let stem = stem.to_string_lossy().into_owned();
        match ext.to_str() {
            Some("xml") => xml.insert(stem),
            Some("md") => md.insert(stem),
            _ => false,
        };
    }

    let mut rows = Vec::new();
    for id in xml.union(&md) {
        let mut row = InventoryRow {
            corpus: corpus.name,
            article_id: id.clone(),
            citations: 0,
            malformed: 0,
            skipped: None,
        };
        if !xml.contains(id) {
            row.skipped = Some("missing xml".into());
        } else {
            let text = read(&xml_path(corpus, id))?;
            for parsed in find_elements(&text, "mixed-citation") {
                match parsed {
                    Ok(_) => row.citations += 1,
                    Err(e) => {
                        log::warn!("{}/{id}: {e}", corpus.name);
                        row.malformed += 1;
                    }
                }
            }
            if !md.contains(id) {
                row.skipped = Some("missing markdown".into());
            } else if read(&md_path(corpus, id))?.trim().is_empty() {
                row.skipped = Some("empty markdown".into());
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn cmd_ingest(config: &RunConfig) -> Result<Vec<InventoryRow>, CliError> {
    if config.corpora.is_empty() {
        return Err(CliError::Config("no [[corpus]] entries".into()));
    }
    let mut rows = Vec::new();
    for corpus in &config.corpora {
        let found = scan_corpus(corpus)?;
        if found.is_empty() {
            return Err(CliError::NoArticlesFound(corpus.dir.clone()));
        }
        rows.extend(found);
    }
    let path = config.out_dir.join(INVENTORY);
    write_jsonl(&path, &rows).at(&path)?;
    Ok(rows)
}

fn article_document(corpus: &CorpusConfig, article_id: &str) -> Result<ArticleDocument, CliError> {
    let markdown = read(&md_path(corpus, article_id))?;
    let xml = read(&xml_path(corpus, article_id))?;
    Ok(ArticleDocument {
        article_id: article_id.to_owned(),
        markdown,
        jats_citations: markup_citations(&xml)
            .into_iter()
            .map(|(tree, _)| tree)
            .collect(),
    })
}

/// Well-formed `mixed-citation` elements with their source text.
fn markup_citations(xml: &str) -> Vec<(MarkupTree, String)> {
    find_elements(xml, "mixed-citation")
        .into_iter()
        .filter_map(Result::ok)
        .map(|(tree, span)| (tree, xml[span].to_owned()))
        .collect()
}

fn plaintext_refs_file(dir: &Path, corpus: Corpus, article_id: &str) -> PathBuf {
    let nested = dir.join(corpus.as_str()).join(format!("{article_id}.txt"));
    if nested.exists() {
        nested
    } else {
        dir.join(format!("{article_id}.txt"))
    }
}

/// Client, model name, response cache and concurrency for the extraction model.
type ExtractionClient = (Arc<dyn ChatClient>, String, Option<ResponseCache>, usize);

/// Extracts reference lists. `plaintext_refs` (or a corpus's own setting)
/// supplies ready-made lists and skips the model.
pub fn cmd_extract(
    config: &RunConfig,
    plaintext_refs: Option<&Path>,
) -> Result<Vec<ExtractionRow>, CliError> {
    let inventory: Vec<InventoryRow> = load(&config.out_dir, INVENTORY)?;
    let pending: Vec<&InventoryRow> = inventory.iter().filter(|r| r.skipped.is_none()).collect();

    let needs_model = pending.iter().any(|row| {
        plaintext_refs.is_none()
            && config
                .corpus(row.corpus)
                .is_some_and(|c| c.plaintext_refs.is_none())
    });
    let client: Option<ExtractionClient> = if needs_model {
        let ext = config.extraction.as_ref().ok_or_else(|| {
            CliError::Config("no [extraction] backend and no plaintext reference lists".into())
        })?;
        if ext.endpoint.is_empty() || ext.model.is_empty() {
            return Err(CliError::Config(
                "[extraction] needs endpoint and model".into(),
            ));
        }
        let transport = Arc::new(UreqTransport::new(ext.timeout(), USER_AGENT));
        let client =
            HttpChatClient::new(&ext.endpoint, ext.api_key(), transport, ext.retry_policy());
        let cache = config.cache_dir_for(ext).map(ResponseCache::new);
        Some((Arc::new(client), ext.model.clone(), cache, ext.concurrency))
    } else {
        None
    };
    let concurrency = client.as_ref().map_or(1, |c| c.3);

    let results = map_bounded(
        &pending,
        concurrency,
        |row| -> Result<ExtractionRow, CliError> {
            let corpus = corpus_config(config, row.corpus)?;
            let doc = article_document(corpus, &row.article_id)?;
            let refs_dir = plaintext_refs.or(corpus.plaintext_refs.as_deref());
            let result = match (refs_dir, &client) {
                (Some(dir), _) => {
                    let lines = read(&plaintext_refs_file(dir, row.corpus, &row.article_id))?;
                    result_from_lines(&row.article_id, &lines, &doc.markdown)
                }
                (None, Some((client, model, cache, _))) => {
                    extract_article(client.as_ref(), model, &doc, cache.as_ref())?
                }
                (None, None) => {
                    unreachable!("model client is built whenever a corpus lacks reference lists")
                }
            };
            for rejected in &result.rejected {
                log::warn!(
                    "{}/{}: dropped unverified line {rejected:?}",
                    row.corpus,
                    row.article_id
                );
            }
            Ok(ExtractionRow {
                corpus: row.corpus,
                article_id: result.article_id,
                citations: result.citations,
                rejected: result.rejected,
            })
        },
    );
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let path = config.out_dir.join(EXTRACTION);
    write_jsonl(&path, &rows).at(&path)?;
    Ok(rows)
}

fn summarize(articles: usize, plaintext: usize, markup: usize, sims: &[f64]) -> CorpusMatchSummary {
    CorpusMatchSummary {
        articles,
        plaintext_citations: plaintext,
        markup_citations: markup,
        matches: sims.len(),
        mean_similarity: (!sims.is_empty()).then(|| sims.iter().sum::<f64>() / sims.len() as f64),
    }
}

/// Matches every article's extracted citations to its markup citations.
pub fn match_article(
    corpus: Corpus,
    article_id: &str,
    plaintexts: &[String],
    markup: &[(MarkupTree, String)],
    threshold: f64,
) -> Result<Vec<MatchedPair>, CliError> {
    let flattened: Vec<String> = markup.iter().map(|(tree, _)| flatten_text(tree)).collect();
    let mut pairs = Vec::new();
    for m in greedy_match(plaintexts, &flattened, threshold) {
        let record = CitationRecord::new(
            format!("{corpus}/{article_id}/{}", m.markup_index),
            corpus,
            article_id,
            &plaintexts[m.plaintext_index],
            markup[m.markup_index].1.clone(),
        )
        .map_err(|e| CliError::Config(format!("{corpus}/{article_id}: {e}")))?;
        pairs.push(MatchedPair {
            plaintext_index: m.plaintext_index,
            markup_index: m.markup_index,
            similarity: m.similarity,
            record,
        });
    }
    // dataset order follows the article's reference list
    pairs.sort_by_key(|p| p.markup_index);
    Ok(pairs)
}

pub fn cmd_match(config: &RunConfig) -> Result<MatchSummary, CliError> {
    let inventory: Vec<InventoryRow> = load(&config.out_dir, INVENTORY)?;
    let extraction: Vec<ExtractionRow> = load(&config.out_dir, EXTRACTION)?;
    let by_article: HashMap<(Corpus, &str), &ExtractionRow> = extraction
        .iter()
        .map(|r| ((r.corpus, r.article_id.as_str()), r))
        .collect();

    let mut entries = Vec::new();
    let mut per_corpus: BTreeMap<Corpus, (usize, usize, usize, Vec<f64>)> = BTreeMap::new();
    for row in inventory.iter().filter(|r| r.skipped.is_none()) {
        let extracted = by_article
            .get(&(row.corpus, row.article_id.as_str()))
            .ok_or_else(|| {
                CliError::MissingExtraction(format!("{}/{}", row.corpus, row.article_id))
            })?;
        let corpus = corpus_config(config, row.corpus)?;
        let doc = read(&md_path(corpus, &row.article_id))?;
        let (_, unverified) = verify_citations(&extracted.citations, &doc);
        if let Some(citation) = unverified.into_iter().next() {
            return Err(CliError::Unverified {
                article: format!("{}/{}", row.corpus, row.article_id),
                citation,
            });
        }
        let markup = markup_citations(&read(&xml_path(corpus, &row.article_id))?);
        let pairs = match_article(
            row.corpus,
            &row.article_id,
            &extracted.citations,
            &markup,
            config.threshold,
        )?;

        let stats = per_corpus.entry(row.corpus).or_default();
        stats.0 += 1;
        stats.1 += extracted.citations.len();
        stats.2 += markup.len();
        stats.3.extend(pairs.iter().map(|p| p.similarity.value()));
        entries.extend(pairs.iter().map(MatchedPair::to_entry));
    }

    let path = config.out_dir.join(MATCHES);
    write_jsonl(&path, &entries).at(&path)?;

    let all_sims: Vec<f64> = entries.iter().map(|e| e.similarity).collect();
    let totals = per_corpus
        .values()
        .fold((0, 0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1, acc.2 + s.2));
    let summary = MatchSummary {
        threshold: config.threshold,
        total: summarize(totals.0, totals.1, totals.2, &all_sims),
        corpora: per_corpus
            .into_iter()
            .map(|(c, s)| (c, summarize(s.0, s.1, s.2, &s.3)))
            .collect(),
    };
    let path = config.out_dir.join(MATCH_SUMMARY);
    write_json(&path, &summary).at(&path)?;
    Ok(summary)
}

/// Draws `sample_size` matches from each configured corpus with the run seed.
pub fn cmd_sample(config: &RunConfig) -> Result<Vec<DatasetEntry>, CliError> {
    let matches: Vec<DatasetEntry> = load(&config.out_dir, MATCHES)?;
    let mut dataset = Vec::new();
    for corpus in &config.corpora {
        let pool: Vec<DatasetEntry> = matches
            .iter()
            .filter(|e| e.corpus == corpus.name)
            .cloned()
            .collect();
        let picked = sample_dataset(&pool, config.sample_size, config.seed).map_err(|source| {
            CliError::Sampling {
                corpus: corpus.name.to_string(),
                source,
            }
        })?;
        dataset.extend(picked);
    }
    let path = config.out_dir.join(DATASET);
    write_jsonl(&path, &dataset).at(&path)?;
    Ok(dataset)
}

pub fn load_dataset(out_dir: &Path) -> Result<Vec<DatasetEntry>, CliError> {
    load(out_dir, DATASET)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn corpus(dir: &Path) -> CorpusConfig {
        CorpusConfig {
            name: Corpus::Pkp,
            dir: dir.to_owned(),
            plaintext_refs: None,
        }
    }

    #[test]
    fn scan_reports_skips() {
        let tmp = tempfile::tempdir().unwrap();
        let d = tmp.path();
        write(d, "a.xml", "<ref-list><mixed-citation>A</mixed-citation><mixed-citation>B</mixed-citation></ref-list>");
        write(d, "a.md", "text");
        write(
            d,
            "b.xml",
            "<mixed-citation>x</mixed-citation><mixed-citation>broken",
        );
        write(d, "c.md", "only markdown");
        write(d, "d.xml", "");
        write(d, "d.md", "  \n");
        write(d, "notes.txt", "ignored");
        let rows = scan_corpus(&corpus(d)).unwrap();
        let view: Vec<_> = rows
            .iter()
            .map(|r| {
                (
                    r.article_id.as_str(),
                    r.citations,
                    r.malformed,
                    r.skipped.as_deref(),
                )
            })
            .collect();
        assert_eq!(
            view,
            vec![
                ("a", 2, 0, None),
                ("b", 1, 1, Some("missing markdown")),
                ("c", 0, 0, Some("missing xml")),
                ("d", 0, 0, Some("empty markdown")),
            ]
        );
    }

    #[test]
    fn matching_drops_low_similarity_and_keeps_source_markup() {
        let xml = r#"<mixed-citation><surname>Doe</surname> J. A study. <year>2001</year>.</mixed-citation>
<mixed-citation><surname>Roe</surname> K. Another. <year>2002</year>.</mixed-citation>"#;
        let markup = markup_citations(xml);
        let plaintexts = vec![
            "Roe K. Another. 2002.".to_string(),
            "Completely different words here".to_string(),
        ];
        let pairs = match_article(Corpus::Ore, "art", &plaintexts, &markup, 0.75).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].markup_index, 1);
        assert_eq!(pairs[0].similarity.value(), 1.0);
        assert_eq!(pairs[0].record.id, "ore/art/1");
        assert!(pairs[0]
            .record
            .markup_xml
            .starts_with("<mixed-citation><surname>Roe"));
        assert_eq!(pairs[0].record.label_fields.year.as_deref(), Some("2002"));
    }
}
