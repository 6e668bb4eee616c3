//! Run configuration: one TOML file plus command-line overrides.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use citegauge::backends::{BackendConfig, PromptMode};
use citegauge::Corpus;
use serde::Deserialize;

use crate::error::CliError;

fn default_modes() -> Vec<PromptMode> {
    vec![PromptMode::Cot, PromptMode::NoCot]
}
fn default_threshold() -> f64 {
    citegauge::matching::DEFAULT_THRESHOLD
}
fn default_sample_size() -> usize {
    1000
}
fn default_samples() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub name: Corpus,
    /// Directory of `<article_id>.xml` / `<article_id>.md` pairs.
    pub dir: PathBuf,
    /// Directory of `<article_id>.txt` reference lists, one citation per
    /// line; when set, extraction reads these instead of calling a model.
    #[serde(default)]
    pub plaintext_refs: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendType {
    Llm,
    /// Offline LLM stand-in that answers with the gold annotation.
    Echo,
    Grobid,
    Crossref,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendEntry {
    pub name: String,
    pub kind: BackendType,
    pub reasoning_model: bool,
    /// Crossref only: hits scoring at or below this are not covered.
    pub min_score: Option<f64>,
    pub modes: Option<Vec<PromptMode>>,
    pub samples: Option<usize>,
    /// Every other key of the `[[backend]]` table.
    pub connection: BackendConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryKeys {
    name: String,
    kind: BackendType,
    #[serde(default)]
    reasoning_model: bool,
    #[serde(default)]
    min_score: Option<f64>,
    #[serde(default)]
    modes: Option<Vec<PromptMode>>,
    #[serde(default)]
    samples: Option<usize>,
}

const ENTRY_KEYS: [&str; 6] = [
    "name",
    "kind",
    "reasoning_model",
    "min_score",
    "modes",
    "samples",
];

// Split by hand: serde's `flatten` would silently accept misspelled keys.
impl<'de> Deserialize<'de> for BackendEntry {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;

        let mut rest = toml::Table::deserialize(deserializer)?;
        let own: toml::Table = ENTRY_KEYS
            .iter()
            .filter_map(|k| rest.remove(*k).map(|v| (k.to_string(), v)))
            .collect();
        let keys: EntryKeys = toml::Value::Table(own)
            .try_into()
            .map_err(D::Error::custom)?;
        let connection: BackendConfig = toml::Value::Table(rest)
            .try_into()
            .map_err(D::Error::custom)?;
        Ok(Self {
            name: keys.name,
            kind: keys.kind,
            reasoning_model: keys.reasoning_model,
            min_score: keys.min_score,
            modes: keys.modes,
            samples: keys.samples,
            connection,
        })
    }
}

impl BackendEntry {
    pub fn is_generative(&self) -> bool {
        matches!(self.kind, BackendType::Llm | BackendType::Echo)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, rename = "corpus")]
    pub corpora: Vec<CorpusConfig>,
    #[serde(default)]
    pub extraction: Option<BackendConfig>,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendEntry>,
    #[serde(default = "default_modes")]
    pub modes: Vec<PromptMode>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Citations sampled from each corpus.
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Completions drawn per citation for generative backends.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub samples: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub backends: Vec<String>,
    pub modes: Vec<PromptMode>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`; relative paths inside are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for corpus in &mut self.corpora {
            resolve(base, &mut corpus.dir);
            if let Some(refs) = &mut corpus.plaintext_refs {
                resolve(base, refs);
            }
        }
        resolve(base, &mut self.out_dir);
        if let Some(cache) = &mut self.cache_dir {
            resolve(base, cache);
        }
        let backend_caches = self
            .backends
            .iter_mut()
            .map(|b| &mut b.connection.cache_dir);
        for cache in self
            .extraction
            .iter_mut()
            .map(|e| &mut e.cache_dir)
            .chain(backend_caches)
            .flatten()
        {
            resolve(base, cache);
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(threshold) = overrides.threshold {
            self.threshold = threshold;
        }
        if let Some(samples) = overrides.samples {
            self.samples = samples;
            for backend in &mut self.backends {
                backend.samples = None;
            }
        }
        if let Some(out) = &overrides.out_dir {
            self.out_dir = out.clone();
        }
        if !overrides.backends.is_empty() {
            for name in &overrides.backends {
                if !self.backends.iter().any(|b| &b.name == name) {
                    return Err(CliError::Config(format!(
                        "no backend named {name:?} in config"
                    )));
                }
            }
            self.backends
                .retain(|b| overrides.backends.contains(&b.name));
        }
        if !overrides.modes.is_empty() {
            self.modes = overrides.modes.clone();
            for backend in &mut self.backends {
                if let Some(modes) = &mut backend.modes {
                    modes.retain(|m| overrides.modes.contains(m));
                }
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            ));
        }
        if self.sample_size == 0 {
            return bad("sample_size must be > 0".into());
        }
        if self.samples == 0 {
            return bad("samples must be >= 1".into());
        }
        let mut corpora = HashSet::new();
        for corpus in &self.corpora {
            if !corpora.insert(corpus.name) {
                return bad(format!("corpus {} listed twice", corpus.name));
            }
        }
        let mut names = HashSet::new();
        for backend in &self.backends {
            let safe = !backend.name.is_empty()
                && backend
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !safe {
                return bad(format!(
                    "backend name {:?} must be non-empty ASCII letters, digits, '-', '_' or '.'",
                    backend.name
                ));
            }
            if !names.insert(backend.name.as_str()) {
                return bad(format!("backend {:?} listed twice", backend.name));
            }
            if backend.samples == Some(0) {
                return bad(format!("backend {:?}: samples must be >= 1", backend.name));
            }
            let needs_endpoint = matches!(backend.kind, BackendType::Llm | BackendType::Grobid);
            if needs_endpoint && backend.connection.endpoint.is_empty() {
                return bad(format!("backend {:?} needs an endpoint", backend.name));
            }
            if backend.kind == BackendType::Llm && backend.connection.model.is_empty() {
                return bad(format!("backend {:?} needs a model", backend.name));
            }
            backend
                .connection
                .validate()
                .map_err(|e| CliError::Config(format!("backend {:?}: {e}", backend.name)))?;
        }
        if let Some(extraction) = &self.extraction {
            extraction
                .validate()
                .map_err(|e| CliError::Config(format!("extraction: {e}")))?;
        }
        Ok(())
    }

    /// Modes a backend runs in, in `cot`, `no_cot` order.
    pub fn modes_for(&self, backend: &BackendEntry) -> Vec<PromptMode> {
        let chosen = backend.modes.as_ref().unwrap_or(&self.modes);
        [PromptMode::Cot, PromptMode::NoCot]
            .into_iter()
            .filter(|m| chosen.contains(m))
            .collect()
    }

    pub fn samples_for(&self, backend: &BackendEntry) -> usize {
        if backend.is_generative() {
            backend.samples.unwrap_or(self.samples)
        } else {
            1
        }
    }

    pub fn corpus(&self, name: Corpus) -> Option<&CorpusConfig> {
        self.corpora.iter().find(|c| c.name == name)
    }

    /// Cache directory for a backend: its own setting, else the run's.
    pub fn cache_dir_for(&self, connection: &BackendConfig) -> Option<PathBuf> {
        connection
            .cache_dir
            .clone()
            .or_else(|| self.cache_dir.clone())
    }
}
