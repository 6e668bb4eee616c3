//! Citation-parsing backends. Each turns a plaintext citation into a
//! [`ParseAttempt`]; network backends cache raw responses so that re-runs
//! replay exactly.

pub mod cache;
pub mod chat;
pub mod crossref;
pub mod grobid;
pub mod heuristic;
pub mod http;
pub mod llm;
pub mod prompts;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::jats::FieldSet;
pub use prompts::PromptMode;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("endpoint {url} failed: {message}")]
    Endpoint { url: String, message: String },
    #[error("rate limited by {url}")]
    RateLimited { url: String },
    #[error("cache entry {} unreadable: {message}", path.display())]
    CacheCorrupt { path: PathBuf, message: String },
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    Grobid,
    Crossref,
    Heuristic,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Llm => "llm",
            BackendKind::Grobid => "grobid",
            BackendKind::Crossref => "crossref",
            BackendKind::Heuristic => "heuristic",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prompting mode of an attempt; backends without prompts use `NotApplicable`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "cot")]
    Cot,
    #[serde(rename = "no_cot")]
    NoCot,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Cot => "cot",
            Mode::NoCot => "no_cot",
            Mode::NotApplicable => "n/a",
        }
    }

    pub fn prompt_mode(self) -> Option<PromptMode> {
        match self {
            Mode::Cot => Some(PromptMode::Cot),
            Mode::NoCot => Some(PromptMode::NoCot),
            Mode::NotApplicable => None,
        }
    }
}

impl From<PromptMode> for Mode {
    fn from(m: PromptMode) -> Self {
        match m {
            PromptMode::Cot => Mode::Cot,
            PromptMode::NoCot => Mode::NoCot,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One backend output for one citation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseAttempt {
    pub citation_id: String,
    pub backend: BackendKind,
    pub mode: Mode,
    pub sample_index: usize,
    pub raw: String,
    pub valid: bool,
    pub fields: Option<FieldSet>,
    /// Search confidence; only the Crossref backend sets it.
    pub score: Option<f64>,
}

impl ParseAttempt {
    /// `valid` follows from whether `fields` is present.
    pub fn new(
        citation_id: &str,
        backend: BackendKind,
        mode: Mode,
        sample_index: usize,
        raw: String,
        fields: Option<FieldSet>,
    ) -> Self {
        Self {
            citation_id: citation_id.to_owned(),
            backend,
            mode,
            sample_index,
            raw,
            valid: fields.is_some(),
            fields,
            score: None,
        }
    }
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn model(&self) -> &str;

    fn parse(
        &self,
        citation_id: &str,
        citation: &str,
        mode: Mode,
        sample_index: usize,
    ) -> Result<ParseAttempt, BackendError>;
}

fn default_timeout_secs() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    30_000
}
fn default_concurrency() -> usize {
    4
}
fn default_api_key_env() -> String {
    "CITEGAUGE_API_KEY".to_owned()
}

/// Connection settings shared by the network backends. Secrets are never
/// stored here, only the name of the environment variable holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: default_api_key_env(),
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
            concurrency: default_concurrency(),
            cache_dir: None,
            max_tokens: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(BackendError::InvalidConfig("timeout must be > 0".into()));
        }
        if self.concurrency == 0 {
            return Err(BackendError::InvalidConfig(
                "concurrency must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn retry_policy(&self) -> http::RetryPolicy {
        http::RetryPolicy {
            retries: self.retries,
            base_backoff: Duration::from_millis(self.backoff_ms),
            max_backoff: Duration::from_millis(self.max_backoff_ms),
        }
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
    }

    pub fn cache(&self) -> Option<cache::ResponseCache> {
        self.cache_dir.as_ref().map(cache::ResponseCache::new)
    }
}

/// Maps `f` over `items` on at most `limit` worker threads, returning results
/// in input order.
pub fn map_bounded<T, R, F>(items: &[T], limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if limit <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(limit).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("worker pool unavailable ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}
