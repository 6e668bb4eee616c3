//! Field-level judging, run aggregation, cross-mode maxima, pass@k, and the
//! compute/emissions estimate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::ParseAttempt;
use crate::jats::{Field, FieldSet};
use crate::matching::edit_distance;

/// Maximum edit distance at which a predicted article title still counts.
pub const TITLE_TOLERANCE: usize = 10;
/// Maximum edit distance at which a predicted source still counts.
pub const SOURCE_TOLERANCE: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("no judgments to aggregate")]
    EmptyRun,
    #[error("reports are not comparable: {0}")]
    MismatchedRuns(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("citations have differing sample counts ({first} vs {other})")]
    RaggedSamples { first: usize, other: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    NotLabeled,
}

/// Tolerance for `field`: edit distance for title and source, exact match
/// otherwise.
pub fn field_tolerance(field: Field) -> usize {
    match field {
        Field::ArticleTitle => TITLE_TOLERANCE,
        Field::Source => SOURCE_TOLERANCE,
        _ => 0,
    }
}

/// Compares normalized strings, case-sensitively.
pub fn field_matches(field: Field, predicted: &str, label: &str) -> bool {
    match field_tolerance(field) {
        0 => predicted == label,
        tol => edit_distance(predicted, label) <= tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJudgment {
    pub citation_id: String,
    pub verdicts: BTreeMap<Field, Verdict>,
    pub covered: bool,
}

impl FieldJudgment {
    pub fn verdict(&self, field: Field) -> Verdict {
        self.verdicts
            .get(&field)
            .copied()
            .unwrap_or(Verdict::NotLabeled)
    }
}

pub fn judge_fields(attempt: &ParseAttempt, label: &FieldSet) -> FieldJudgment {
    let predicted = attempt.fields.as_ref().filter(|_| attempt.valid);
    let verdicts = Field::ALL
        .into_iter()
        .map(|field| {
            let verdict = match (label.get(field), predicted) {
                (None, _) => Verdict::NotLabeled,
                (Some(_), None) => Verdict::Incorrect,
                (Some(gold), Some(pred)) => match pred.get(field) {
                    Some(p) if field_matches(field, p, gold) => Verdict::Correct,
                    _ => Verdict::Incorrect,
                },
            };
            (field, verdict)
        })
        .collect();
    FieldJudgment {
        citation_id: attempt.citation_id.clone(),
        verdicts,
        covered: predicted.is_some(),
    }
}

/// Identifies a run: backend name, model, and prompting mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub backend: String,
    pub model: String,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStat {
    pub correct: usize,
    /// Citations whose label has this field.
    pub labeled: usize,
    /// `correct / labeled`; absent when no citation is labeled.
    pub accuracy: Option<f64>,
    /// `correct / total`, for readers who count every citation.
    pub accuracy_over_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub run: RunInfo,
    pub total: usize,
    pub covered: usize,
    pub coverage: f64,
    pub fields: BTreeMap<Field, FieldStat>,
}

impl EvaluationReport {
    pub fn accuracy(&self, field: Field) -> Option<f64> {
        self.fields.get(&field).and_then(|s| s.accuracy)
    }
}

pub fn aggregate(
    run: RunInfo,
    judgments: &[FieldJudgment],
) -> Result<EvaluationReport, ScoringError> {
    if judgments.is_empty() {
        return Err(ScoringError::EmptyRun);
    }
    let total = judgments.len();
    let covered = judgments.iter().filter(|j| j.covered).count();
    let fields = Field::ALL
        .into_iter()
        .map(|field| {
            let mut correct = 0;
            let mut labeled = 0;
            for j in judgments {
                match j.verdict(field) {
                    Verdict::Correct => {
                        correct += 1;
                        labeled += 1;
                    }
                    Verdict::Incorrect => labeled += 1,
                    Verdict::NotLabeled => {}
                }
            }
            let stat = FieldStat {
                correct,
                labeled,
                accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
                accuracy_over_total: correct as f64 / total as f64,
            };
            (field, stat)
        })
        .collect();
    Ok(EvaluationReport {
        run,
        total,
        covered,
        coverage: covered as f64 / total as f64,
        fields,
    })
}

/// Field-wise maximum of two runs plus the mode each maximum came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestOfModes {
    pub report: EvaluationReport,
    /// Field name (or `coverage`) to the mode that supplied the maximum.
    pub provenance: BTreeMap<String, String>,
}

/// Picks the better of two values; ties go to the lexicographically smaller
/// mode so the result does not depend on argument order.
fn pick<'a, T: PartialOrd>(a: (T, &'a str), b: (T, &'a str)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Less) => false,
        _ => a.1 <= b.1,
    }
}

pub fn best_of_modes(
    a: &EvaluationReport,
    b: &EvaluationReport,
) -> Result<BestOfModes, ScoringError> {
    if a.run.backend != b.run.backend || a.run.model != b.run.model {
        return Err(ScoringError::MismatchedRuns(format!(
            "{}/{} vs {}/{}",
            a.run.backend, a.run.model, b.run.backend, b.run.model
        )));
    }
    if a.total != b.total {
        return Err(ScoringError::MismatchedRuns(format!(
            "{} vs {} citations",
            a.total, b.total
        )));
    }
    for field in Field::ALL {
        let la = a.fields.get(&field).map(|s| s.labeled);
        let lb = b.fields.get(&field).map(|s| s.labeled);
        if la != lb {
            return Err(ScoringError::MismatchedRuns(format!(
                "{field} labeled in {la:?} vs {lb:?} citations"
            )));
        }
    }

    let (ma, mb) = (a.run.mode.as_str(), b.run.mode.as_str());
    let mut provenance = BTreeMap::new();
    let mut fields = BTreeMap::new();
    for field in Field::ALL {
        let (Some(sa), Some(sb)) = (a.fields.get(&field), b.fields.get(&field)) else {
            continue;
        };
        let take_a = pick((sa.accuracy, ma), (sb.accuracy, mb));
        let (stat, mode) = if take_a { (sa, ma) } else { (sb, mb) };
        fields.insert(field, stat.clone());
        provenance.insert(field.to_string(), mode.to_owned());
    }
    let take_a = pick((a.coverage, ma), (b.coverage, mb));
    let (covered, coverage, mode) = if take_a {
        (a.covered, a.coverage, ma)
    } else {
        (b.covered, b.coverage, mb)
    };
    provenance.insert("coverage".to_owned(), mode.to_owned());

    let merged_mode = if ma == mb {
        ma.to_owned()
    } else {
        "best".to_owned()
    };
    Ok(BestOfModes {
        report: EvaluationReport {
            run: RunInfo {
                backend: a.run.backend.clone(),
                model: a.run.model.clone(),
                mode: merged_mode,
            },
            total: a.total,
            covered,
            coverage,
            fields,
        },
        provenance,
    })
}

/// Unbiased pass@k estimate `1 - C(n-c, k) / C(n, k)` from `n` samples with
/// `c` correct, evaluated as a running product.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, ScoringError> {
    if c > n {
        return Err(ScoringError::Domain(format!("c = {c} exceeds n = {n}")));
    }
    if k == 0 || k > n {
        return Err(ScoringError::Domain(format!("k = {k} outside 1..={n}")));
    }
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
    let miss = (0..k).fold(1.0_f64, |acc, i| acc * (n - c - i) as f64 / (n - i) as f64);
    Ok(1.0 - miss)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationCount {
    pub citation_id: String,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPassAtK {
    /// Citations labeled with this field.
    pub labeled: usize,
    /// Fraction of labeled citations with at least one correct sample.
    pub any_at_n: Option<f64>,
    /// Mean pass@k estimate over labeled citations, by k.
    pub pass_at_k: BTreeMap<usize, f64>,
    pub counts: Vec<CitationCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtKReport {
    /// Samples drawn per citation.
    pub n: usize,
    pub citations: usize,
    pub fields: BTreeMap<Field, FieldPassAtK>,
}

/// Powers of two below `n`, then `n` itself.
pub fn default_ks(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| k.checked_mul(2))
        .take_while(|&k| k < n)
        .collect();
    if n > 0 {
        ks.push(n);
    }
    ks
}

/// Per-field "appears within n samples" rates; `samples[i]` holds every
/// sampled judgment of citation `i`.
pub fn any_at_k(samples: &[Vec<FieldJudgment>]) -> Result<PassAtKReport, ScoringError> {
    let n = samples
        .first()
        .map(Vec::len)
        .ok_or(ScoringError::EmptyRun)?;
    if let Some(other) = samples.iter().map(Vec::len).find(|&len| len != n) {
        return Err(ScoringError::RaggedSamples { first: n, other });
    }
    if n == 0 {
        return Err(ScoringError::EmptyRun);
    }
    let ks = default_ks(n);

    let mut fields = BTreeMap::new();
    for field in Field::ALL {
        let counts: Vec<CitationCount> = samples
            .iter()
            .filter(|runs| runs.iter().any(|j| j.verdict(field) != Verdict::NotLabeled))
            .map(|runs| CitationCount {
                citation_id: runs[0].citation_id.clone(),
                correct: runs
                    .iter()
                    .filter(|j| j.verdict(field) == Verdict::Correct)
                    .count(),
            })
            .collect();
        let labeled = counts.len();
        let any_at_n = (labeled > 0)
            .then(|| counts.iter().filter(|c| c.correct > 0).count() as f64 / labeled as f64);
        let mut pass = BTreeMap::new();
        if labeled > 0 {
            for &k in &ks {
                let mut sum = 0.0;
                for c in &counts {
                    sum += pass_at_k(n, c.correct, k)?;
                }
                pass.insert(k, sum / labeled as f64);
            }
        }
        fields.insert(
            field,
            FieldPassAtK {
                labeled,
                any_at_n,
                pass_at_k: pass,
                counts,
            },
        );
    }
    Ok(PassAtKReport {
        n,
        citations: samples.len(),
        fields,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyInputs {
    pub tdp_kw: f64,
    pub hours: f64,
    pub pue: f64,
    pub carbon_kg_per_kwh: f64,
    pub kg_per_mile: f64,
}

impl Default for EnergyInputs {
    /// 700 W accelerator for six hours, US-average datacenter PUE, grid
    /// carbon intensity, and passenger-vehicle emissions per mile.
    fn default() -> Self {
        Self {
            tdp_kw: 0.7,
            hours: 6.0,
            pue: 1.56,
            carbon_kg_per_kwh: 0.37335,
            kg_per_mile: 0.393,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(flatten)]
    pub inputs: EnergyInputs,
    pub gpu_kwh: f64,
    pub total_kwh: f64,
    pub kg_co2: f64,
    pub miles: f64,
}

// Derived figures are snapped to 1e-9 of their unit so decimal inputs give
// decimal outputs (0.7 * 6 is 4.2, not 4.199999999999999).
fn snap(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

pub fn energy_report(inputs: EnergyInputs) -> Result<EnergyReport, ScoringError> {
    let named = [
        ("tdp_kw", inputs.tdp_kw),
        ("hours", inputs.hours),
        ("pue", inputs.pue),
        ("carbon_kg_per_kwh", inputs.carbon_kg_per_kwh),
        ("kg_per_mile", inputs.kg_per_mile),
    ];
    for (name, value) in named {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ScoringError::Domain(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    let gpu_kwh = snap(inputs.tdp_kw * inputs.hours);
    let total_kwh = snap(gpu_kwh * inputs.pue);
    let kg_co2 = snap(total_kwh * inputs.carbon_kg_per_kwh);
    let miles = snap(kg_co2 / inputs.kg_per_mile);
    Ok(EnergyReport {
        inputs,
        gpu_kwh,
        total_kwh,
        kg_co2,
        miles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendKind, Mode};

    fn attempt(fields: Option<FieldSet>) -> ParseAttempt {
        ParseAttempt::new("c", BackendKind::Llm, Mode::Cot, 0, String::new(), fields)
    }

    fn label() -> FieldSet {
        FieldSet::default()
            .with(Field::Year, "2014")
            .with(Field::Volume, "129")
            .with(Field::Issue, "25")
            .with(Field::Surname, "Stone")
            .with(Field::Source, "Circulation")
    }

    #[test]
    fn exact_fields() {
        let j = judge_fields(
            &attempt(Some(FieldSet::default().with(Field::Year, "2014"))),
            &label(),
        );
        assert_eq!(j.verdict(Field::Year), Verdict::Correct);
        assert_eq!(j.verdict(Field::Volume), Verdict::Incorrect);
        assert_eq!(j.verdict(Field::Fpage), Verdict::NotLabeled);
        assert!(j.covered);
        let j = judge_fields(
            &attempt(Some(FieldSet::default().with(Field::Year, "2015"))),
            &label(),
        );
        assert_eq!(j.verdict(Field::Year), Verdict::Incorrect);
    }

    #[test]
    fn exact_match_is_case_sensitive() {
        let j = judge_fields(
            &attempt(Some(FieldSet::default().with(Field::Surname, "stone"))),
            &label(),
        );
        assert_eq!(j.verdict(Field::Surname), Verdict::Incorrect);
    }

    #[test]
    fn invalid_attempt_fails_every_labeled_field() {
        let j = judge_fields(&attempt(None), &label());
        assert!(!j.covered);
        let incorrect = j
            .verdicts
            .values()
            .filter(|v| **v == Verdict::Incorrect)
            .count();
        assert_eq!(incorrect, 5);
        assert_eq!(j.verdict(Field::ArticleTitle), Verdict::NotLabeled);
    }

    #[test]
    fn aggregate_counts() {
        let full = label();
        let judgments: Vec<_> = [true, false, true, false]
            .iter()
            .map(|&ok| judge_fields(&attempt(ok.then(|| full.clone())), &full))
            .collect();
        let info = RunInfo {
            backend: "b".into(),
            model: "m".into(),
            mode: "cot".into(),
        };
        let r = aggregate(info.clone(), &judgments).unwrap();
        assert_eq!(r.coverage, 0.5);
        assert_eq!(r.accuracy(Field::Year), Some(0.5));
        assert_eq!(r.accuracy(Field::Fpage), None);
        assert_eq!(r.fields[&Field::Fpage].labeled, 0);
        assert_eq!(aggregate(info, &[]), Err(ScoringError::EmptyRun));
    }

    #[test]
    fn pass_at_k_values() {
        assert_eq!(pass_at_k(4, 2, 2).unwrap(), 5.0 / 6.0);
        assert_eq!(pass_at_k(64, 64, 1).unwrap(), 1.0);
        for k in 1..=64 {
            assert_eq!(pass_at_k(64, 0, k).unwrap(), 0.0);
        }
        assert!(pass_at_k(4, 5, 1).is_err());
        assert!(pass_at_k(4, 1, 0).is_err());
        assert!(pass_at_k(4, 1, 5).is_err());
    }

    #[test]
    fn ks() {
        assert_eq!(default_ks(64), vec![1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(default_ks(5), vec![1, 2, 4, 5]);
        assert_eq!(default_ks(1), vec![1]);
    }

    #[test]
    fn energy_defaults() {
        let r = energy_report(EnergyInputs::default()).unwrap();
        assert_eq!(r.gpu_kwh, 4.2);
        assert!((r.total_kwh - 6.552).abs() < 1e-9);
        assert!((r.kg_co2 - 2.46).abs() <= 0.05);
        assert!((r.miles - 6.26).abs() <= 0.1);
    }

    #[test]
    fn energy_rejects_non_positive() {
        let bad = EnergyInputs {
            hours: 0.0,
            ..EnergyInputs::default()
        };
        assert!(matches!(energy_report(bad), Err(ScoringError::Domain(_))));
        let nan = EnergyInputs {
            pue: f64::NAN,
            ..EnergyInputs::default()
        };
        assert!(energy_report(nan).is_err());
    }
}
