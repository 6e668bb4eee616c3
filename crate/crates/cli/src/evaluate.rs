//! Running backends over the sampled dataset and turning their judgments into
//! reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use citegauge::backends::cache::ResponseCache;
use citegauge::backends::chat::HttpChatClient;
use citegauge::backends::crossref::{CrossrefBackend, MAILTO_ENV};
use citegauge::backends::grobid::GrobidBackend;
use citegauge::backends::heuristic::HeuristicBackend;
use citegauge::backends::http::UreqTransport;
use citegauge::backends::llm::{LabelEchoClient, LlmBackend};
use citegauge::backends::{map_bounded, Backend, Mode, PromptMode};
use citegauge::io::{read_jsonl, write_json, write_jsonl};
use citegauge::scoring::{
    aggregate, any_at_k, best_of_modes, judge_fields, BestOfModes, EvaluationReport, FieldJudgment,
    PassAtKReport, RunInfo, Verdict,
};
use citegauge::{CitationRecord, Field, FieldSet};
use serde::{Deserialize, Serialize};

use crate::config::{BackendEntry, BackendType, RunConfig};
use crate::dataset::load_dataset;
use crate::error::{CliError, IoContext};

pub const JUDGMENTS_DIR: &str = "judgments";
pub const REPORTS_DIR: &str = "reports";
pub const SUMMARY_CSV: &str = "summary.csv";

const USER_AGENT: &str = concat!("citegauge/", env!("CARGO_PKG_VERSION"));

/// One scored backend output: the attempt plus its field verdicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRow {
    pub backend: String,
    pub model: String,
    pub mode: Mode,
    pub citation_id: String,
    pub sample_index: usize,
    pub valid: bool,
    pub covered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<FieldSet>,
    pub verdicts: BTreeMap<Field, Verdict>,
    pub raw: String,
}

impl JudgmentRow {
    pub fn judgment(&self) -> FieldJudgment {
        FieldJudgment {
            citation_id: self.citation_id.clone(),
            verdicts: self.verdicts.clone(),
            covered: self.covered,
        }
    }
}

/// Calls that errored rather than producing an attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub citation_id: String,
    pub sample_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunOutput {
    pub rows: Vec<JudgmentRow>,
    pub failures: Vec<Failure>,
}

/// Report for one backend and mode, with the count of failed calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub report: EvaluationReport,
    pub samples: usize,
    pub failed: usize,
}

pub fn run_stem(backend: &str, mode: Mode) -> String {
    let mode = match mode {
        Mode::NotApplicable => "na",
        m => m.as_str(),
    };
    format!("{backend}__{mode}")
}

/// Runs `backend` on every record `samples` times in one mode, with at most
/// `concurrency` calls in flight. Output keeps dataset order.
pub fn run_backend(
    name: &str,
    backend: &dyn Backend,
    records: &[CitationRecord],
    mode: Mode,
    samples: usize,
    concurrency: usize,
) -> RunOutput {
    let tasks: Vec<(usize, usize)> = (0..samples)
        .flat_map(|s| (0..records.len()).map(move |i| (i, s)))
        .collect();
    let results = map_bounded(&tasks, concurrency, |&(i, s)| {
        let record = &records[i];
        backend
            .parse(&record.id, &record.plaintext, mode, s)
            .map(|attempt| {
                let j = judge_fields(&attempt, &record.label_fields);
                JudgmentRow {
                    backend: name.to_owned(),
                    model: backend.model().to_owned(),
                    mode,
                    citation_id: attempt.citation_id,
                    sample_index: s,
                    valid: attempt.valid,
                    covered: j.covered,
                    score: attempt.score,
                    fields: attempt.fields,
                    verdicts: j.verdicts,
                    raw: attempt.raw,
                }
            })
            .map_err(|e| Failure {
                citation_id: record.id.clone(),
                sample_index: s,
                error: e.to_string(),
            })
    });
    let mut out = RunOutput::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

/// Builds the backend described by `entry`. The echo backend answers from
/// `records`.
pub fn build_backend(
    config: &RunConfig,
    entry: &BackendEntry,
    records: &[CitationRecord],
) -> Result<Box<dyn Backend>, CliError> {
    let conn = &entry.connection;
    let cache = config.cache_dir_for(conn).map(ResponseCache::new);
    let transport = || Arc::new(UreqTransport::new(conn.timeout(), USER_AGENT));
    Ok(match entry.kind {
        BackendType::Llm => {
            let client = HttpChatClient::new(
                &conn.endpoint,
                conn.api_key(),
                transport(),
                conn.retry_policy(),
            );
            Box::new(
                LlmBackend::new(Arc::new(client), conn.model.clone(), entry.reasoning_model)
                    .with_cache(cache)
                    .with_max_tokens(conn.max_tokens),
            )
        }
        BackendType::Echo => {
            let client = LabelEchoClient::new(
                records
                    .iter()
                    .map(|r| (r.plaintext.as_str(), r.markup_xml.clone())),
            );
            let model = if conn.model.is_empty() {
                "label-echo"
            } else {
                &conn.model
            };
            Box::new(
                LlmBackend::new(Arc::new(client), model, entry.reasoning_model)
                    .with_max_tokens(conn.max_tokens),
            )
        }
        BackendType::Grobid => Box::new(
            GrobidBackend::new(&conn.endpoint, transport(), conn.retry_policy()).with_cache(cache),
        ),
        BackendType::Crossref => Box::new(
            CrossrefBackend::new(&conn.endpoint, transport(), conn.retry_policy())
                .with_min_score(entry.min_score)
                .with_mailto(std::env::var(MAILTO_ENV).ok().filter(|m| !m.is_empty()))
                .with_cache(cache),
        ),
        BackendType::Heuristic => Box::new(HeuristicBackend),
    })
}

fn modes_to_run(config: &RunConfig, entry: &BackendEntry) -> Vec<Mode> {
    if entry.is_generative() {
        config
            .modes_for(entry)
            .into_iter()
            .map(Mode::from)
            .collect()
    } else {
        vec![Mode::NotApplicable]
    }
}

/// Runs every configured backend and mode, writes judgments, then reports.
/// Failed calls do not stop the run; they are recorded and turn the final
/// result into [`CliError::Partial`].
pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<RunReport>, CliError> {
    let records = load_dataset(&config.out_dir)?
        .iter()
        .map(|e| e.to_record())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Config(format!("dataset markup does not parse: {e}")))?;
    if config.backends.is_empty() {
        return Err(CliError::Config("no [[backend]] entries selected".into()));
    }
    let dir = config.out_dir.join(JUDGMENTS_DIR);
    let mut failed = 0;
    for entry in &config.backends {
        let backend = build_backend(config, entry, &records)?;
        for mode in modes_to_run(config, entry) {
            log::info!(
                "evaluating {} ({mode}) on {} citations",
                entry.name,
                records.len()
            );
            let out = run_backend(
                &entry.name,
                backend.as_ref(),
                &records,
                mode,
                config.samples_for(entry),
                entry.connection.concurrency,
            );
            for f in &out.failures {
                log::error!("{} ({mode}) {}: {}", entry.name, f.citation_id, f.error);
            }
            failed += out.failures.len();
            write_run(&dir, &run_stem(&entry.name, mode), &out)?;
        }
    }
    let reports = cmd_report(&config.out_dir)?;
    if failed > 0 {
        return Err(CliError::Partial { failed });
    }
    Ok(reports)
}

pub fn write_run(dir: &Path, stem: &str, out: &RunOutput) -> Result<(), CliError> {
    let rows = dir.join(format!("{stem}.jsonl"));
    write_jsonl(&rows, &out.rows).at(&rows)?;
    let failures = dir.join(format!("{stem}.failures.jsonl"));
    if out.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures).at(&failures)?;
        }
    } else {
        write_jsonl(&failures, &out.failures).at(&failures)?;
    }
    Ok(())
}

fn judgment_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.exists() {
        return Err(CliError::MissingInput {
            path: dir.to_owned(),
            message: "not found; run `evaluate` first".into(),
        });
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .at(dir)?;
    files.retain(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        name.ends_with(".jsonl") && !name.ends_with(".failures.jsonl")
    });
    files.sort();
    Ok(files)
}

/// Groups rows into per-citation sample lists, in first-seen citation order.
fn by_citation(rows: &[JudgmentRow]) -> Vec<Vec<FieldJudgment>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<(usize, FieldJudgment)>> = BTreeMap::new();
    for row in rows {
        let group = groups.entry(&row.citation_id).or_insert_with(|| {
            order.push(&row.citation_id);
            Vec::new()
        });
        group.push((row.sample_index, row.judgment()));
    }
    order
        .into_iter()
        .map(|id| {
            let mut samples = groups.remove(id).unwrap_or_default();
            samples.sort_by_key(|(s, _)| *s);
            samples.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

fn count_failures(path: &Path) -> Result<usize, CliError> {
    if !path.exists() {
        return Ok(0);
    }
    Ok(read_jsonl::<Failure>(path).at(path)?.len())
}

/// Rebuilds every report and the CSV summary from the judgment files.
pub fn cmd_report(out_dir: &Path) -> Result<Vec<RunReport>, CliError> {
    let judgments = out_dir.join(JUDGMENTS_DIR);
    let reports_dir = out_dir.join(REPORTS_DIR);
    let mut reports = Vec::new();
    for file in judgment_files(&judgments)? {
        let rows: Vec<JudgmentRow> = read_jsonl(&file).at(&file)?;
        let Some(first) = rows.first() else {
            log::warn!("{} is empty", file.display());
            continue;
        };
        let info = RunInfo {
            backend: first.backend.clone(),
            model: first.model.clone(),
            mode: first.mode.as_str().to_owned(),
        };
        let stem = run_stem(&first.backend, first.mode);
        let failed = count_failures(&judgments.join(format!("{stem}.failures.jsonl")))?;
        let first_samples: Vec<FieldJudgment> = rows
            .iter()
            .filter(|r| r.sample_index == 0)
            .map(JudgmentRow::judgment)
            .collect();
        let samples = rows.iter().map(|r| r.sample_index + 1).max().unwrap_or(1);
        let report = RunReport {
            report: aggregate(info, &first_samples)?,
            samples,
            failed,
        };
        let path = reports_dir.join(format!("{stem}.json"));
        write_json(&path, &report).at(&path)?;
        if samples > 1 {
            match any_at_k(&by_citation(&rows)) {
                Ok(passk) => {
                    let path = reports_dir.join(format!("{stem}.passk.json"));
                    write_json::<PassAtKReport>(&path, &passk).at(&path)?;
                }
                Err(e) => log::warn!("{stem}: no pass@k report ({e})"),
            }
        }
        reports.push(report);
    }

    let mut best = Vec::new();
    for cot in reports
        .iter()
        .filter(|r| r.report.run.mode == Mode::Cot.as_str())
    {
        let direct = reports.iter().find(|r| {
            r.report.run.mode == Mode::NoCot.as_str()
                && r.report.run.backend == cot.report.run.backend
        });
        if let Some(direct) = direct {
            let merged: BestOfModes = best_of_modes(&cot.report, &direct.report)?;
            let path = reports_dir.join(format!("{}__best.json", cot.report.run.backend));
            write_json(&path, &merged).at(&path)?;
            best.push(RunReport {
                report: merged.report,
                samples: cot.samples.min(direct.samples),
                failed: cot.failed + direct.failed,
            });
        }
    }
    reports.extend(best);
    reports.sort_by(|a, b| {
        (&a.report.run.backend, &a.report.run.mode)
            .cmp(&(&b.report.run.backend, &b.report.run.mode))
    });
    let path = reports_dir.join(SUMMARY_CSV);
    citegauge::io::write_atomic(&path, &summary_csv(&reports)?).at(&path)?;
    Ok(reports)
}

pub fn summary_csv(reports: &[RunReport]) -> Result<Vec<u8>, CliError> {
    let to_err = |e: csv::Error| CliError::Config(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "backend", "model", "mode", "total", "covered", "coverage", "failed",
    ];
    header.extend(Field::ALL.iter().map(|f| f.element_name()));
    w.write_record(&header).map_err(to_err)?;
    for r in reports {
        let run = &r.report;
        let mut record = vec![
            run.run.backend.clone(),
            run.run.model.clone(),
            run.run.mode.clone(),
            run.total.to_string(),
            run.covered.to_string(),
            run.coverage.to_string(),
            r.failed.to_string(),
        ];
        record.extend(
            Field::ALL
                .iter()
                .map(|f| run.accuracy(*f).map(|a| a.to_string()).unwrap_or_default()),
        );
        w.write_record(&record).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Config(format!("csv: {e}")))
}

/// Modes parsed from `--mode`.
pub fn parse_mode(s: &str) -> Result<PromptMode, String> {
    match s {
        "cot" => Ok(PromptMode::Cot),
        "no_cot" | "no-cot" | "nocot" => Ok(PromptMode::NoCot),
        other => Err(format!("unknown mode {other:?}; expected cot or no_cot")),
    }
}
