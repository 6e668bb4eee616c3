//! Edit-distance similarity between plaintext and flattened markup
//! citations, greedy one-to-one matching, and seeded dataset sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::jats::{CitationRecord, Corpus, JatsError};

/// Similarity cutoff below which candidate matches are discarded.
pub const DEFAULT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("similarity of two empty strings is undefined")]
    BothEmpty,
    #[error("requested {requested} pairs but only {available} are available")]
    InsufficientPairs { requested: usize, available: usize },
}

type Chars = SmallVec<[char; 64]>;

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        return byte_distance(a.as_bytes(), b.as_bytes());
    }
    let a: Chars = a.chars().collect();
    let b: Chars = b.chars().collect();
    levenshtein(&a, &b)
}

fn byte_distance(a: &[u8], b: &[u8]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    if short.len() > 64 {
        return levenshtein(a, b);
    }
    // bit-parallel column update (Myers 1999, Hyyrö's global variant)
    let mut peq = [0u64; 256];
    for (i, &c) in short.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    let last = 1u64 << (short.len() - 1);
    let (mut pv, mut mv) = (u64::MAX, 0u64);
    let mut score = short.len();
    for &c in long {
        let eq = peq[c as usize];
        let xv = eq | mv;
        let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
        let ph = mv | !(xh | pv);
        let mh = pv & xh;
        if ph & last != 0 {
            score += 1;
        } else if mh & last != 0 {
            score -= 1;
        }
        let ph = (ph << 1) | 1;
        let mh = mh << 1;
        pv = mh | !(xv | ph);
        mv = ph & xv;
    }
    score
}

/// Levenshtein distance over arbitrary symbol slices.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    // keep the DP row over the shorter side
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut row: SmallVec<[usize; 64]> = (0..=short.len()).collect();
    for (i, x) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in short.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    row[short.len()]
}

/// Normalized similarity in `[0, 1]`; 1 means identical strings.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `1 - d(p, c) / max(|p|, |c|)` with lengths in Unicode scalar values.
pub fn similarity(p: &str, c: &str) -> Result<SimilarityScore, MatchError> {
    let p: Chars = p.chars().collect();
    let c: Chars = c.chars().collect();
    let longest = p.len().max(c.len());
    if longest == 0 {
        return Err(MatchError::BothEmpty);
    }
    let d = levenshtein(&p, &c);
    Ok(SimilarityScore(1.0 - d as f64 / longest as f64))
}

/// One accepted (plaintext, markup) pairing within an article.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexMatch {
    pub plaintext_index: usize,
    pub markup_index: usize,
    pub similarity: SimilarityScore,
}

/// Greedy selection over a score matrix (`scores[plaintext][markup]`).
///
/// The highest remaining pair is taken first; ties go to the smaller
/// plaintext index, then the smaller markup index. `None` entries never match.
/// Output is in selection order, so similarities are non-increasing.
pub fn greedy_assign(scores: &[Vec<Option<f64>>], threshold: f64) -> Vec<IndexMatch> {
    let mut candidates: Vec<(usize, usize, f64)> = scores
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, s)| s.filter(|&s| s >= threshold).map(|s| (i, j, s)))
        })
        .collect();
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));

    let cols = scores.iter().map(Vec::len).max().unwrap_or(0);
    let mut row_used = vec![false; scores.len()];
    let mut col_used = vec![false; cols];
    let mut out = Vec::new();
    for (i, j, s) in candidates {
        if row_used[i] || col_used[j] {
            continue;
        }
        row_used[i] = true;
        col_used[j] = true;
        out.push(IndexMatch {
            plaintext_index: i,
            markup_index: j,
            similarity: SimilarityScore(s),
        });
    }
    out
}

/// Full pairwise similarity matrix; pairs of two empty strings are `None`.
pub fn similarity_matrix<P: AsRef<str>, M: AsRef<str>>(
    plaintexts: &[P],
    markups: &[M],
) -> Vec<Vec<Option<f64>>> {
    plaintexts
        .iter()
        .map(|p| {
            markups
                .iter()
                .map(|m| {
                    similarity(p.as_ref(), m.as_ref())
                        .ok()
                        .map(SimilarityScore::value)
                })
                .collect()
        })
        .collect()
}

/// Matches one article's plaintext citations against its flattened markup
/// citations.
pub fn greedy_match<P: AsRef<str>, M: AsRef<str>>(
    plaintexts: &[P],
    markups: &[M],
    threshold: f64,
) -> Vec<IndexMatch> {
    greedy_assign(&similarity_matrix(plaintexts, markups), threshold)
}

/// A match together with the citation record it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub plaintext_index: usize,
    pub markup_index: usize,
    pub similarity: SimilarityScore,
    pub record: CitationRecord,
}

impl MatchedPair {
    pub fn to_entry(&self) -> DatasetEntry {
        DatasetEntry {
            id: self.record.id.clone(),
            corpus: self.record.corpus,
            article_id: self.record.article_id.clone(),
            plaintext: self.record.plaintext.clone(),
            markup_xml: self.record.markup_xml.clone(),
            similarity: self.similarity.value(),
        }
    }
}

/// One line of the matched dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub corpus: Corpus,
    pub article_id: String,
    pub plaintext: String,
    pub markup_xml: String,
    pub similarity: f64,
}

impl DatasetEntry {
    pub fn to_record(&self) -> Result<CitationRecord, JatsError> {
        CitationRecord::new(
            self.id.clone(),
            self.corpus,
            self.article_id.clone(),
            &self.plaintext,
            self.markup_xml.clone(),
        )
    }
}

/// Uniform sample of `n` items without replacement, in input order.
/// Deterministic for a fixed seed.
pub fn sample_dataset<T: Clone>(pairs: &[T], n: usize, seed: u64) -> Result<Vec<T>, MatchError> {
    if n > pairs.len() {
        return Err(MatchError::InsufficientPairs {
            requested: n,
            available: pairs.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pairs.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pairs[i].clone()).collect())
}
