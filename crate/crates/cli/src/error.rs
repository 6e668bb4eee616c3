use std::path::PathBuf;

use citegauge::backends::BackendError;
use citegauge::matching::MatchError;
use citegauge::scoring::ScoringError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no articles found under {}", .0.display())]
    NoArticlesFound(PathBuf),
    #[error("no extraction for article {0}; run `extract` first")]
    MissingExtraction(String),
    #[error("missing input {}: {message}", path.display())]
    MissingInput { path: PathBuf, message: String },
    #[error("extracted citation not found in article {article}: {citation:?}")]
    Unverified { article: String, citation: String },
    #[error("cannot sample corpus {corpus}")]
    Sampling { corpus: String, source: MatchError },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("{failed} backend calls failed; partial outputs were written")]
    Partial { failed: usize },
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Attaches the path to an I/O error.
pub trait IoContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: &std::path::Path) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })
    }
}
