use std::path::PathBuf;

use labelaug_core::autodiff::AutodiffError;
use labelaug_core::metrics::MetricsError;
use labelaug_core::models::ModelError;
use labelaug_core::objectives::ObjectiveError;
use labelaug_core::oracle::OracleError;
use labelaug_core::transform::TransformError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite value at iteration {iter}: {what} (partial artifacts in {dir})", dir = .dir.display())]
    NonFinite { iter: usize, what: String, dir: PathBuf },
    #[error("writing {path}: {source}", path = .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("{0}")]
    Internal(String),
}

impl RunError {
    /// Process exit code: 3 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 3,
            _ => 1,
        }
    }
}
