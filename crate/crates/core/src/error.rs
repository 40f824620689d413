use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GccError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GccError {
    #[error("invalid network spec `{network}`: {reason}")]
    Spec { network: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pruning budget of {target} MACs is unachievable; minimum achievable is {minimum} MACs")]
    UnachievableBudget { target: u64, minimum: u64 },

    #[error("pruning plan does not match spec: {0}")]
    PlanMismatch(String),

    #[error("non-finite loss `{what}` at epoch {epoch}, step {step}")]
    NonFinite {
        what: String,
        epoch: usize,
        step: usize,
        checkpoint: Option<PathBuf>,
    },

    #[error("run record is empty or corrupt: {0}")]
    Record(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl GccError {
    pub(crate) fn spec(network: &str, reason: impl Into<String>) -> Self {
        GccError::Spec {
            network: network.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GccError::Io {
            path: path.into(),
            source,
        }
    }
}

pub fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| GccError::io(path, e))
}

/// Writes a file, creating parent directories.
pub fn write_string(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| GccError::io(parent, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| GccError::io(path, e))
}
