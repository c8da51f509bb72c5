use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: {reason}", path.display())]
    MissingArtifact { path: PathBuf, reason: String },
    #[error("invalid artifact {}: {reason}", path.display())]
    InvalidArtifact { path: PathBuf, reason: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } | CliError::InvalidArtifact { .. } => 3,
            CliError::Numeric(_) => 4,
            CliError::Io { .. } => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::InvalidArtifact { .. } => "invalid_artifact",
            CliError::Numeric(_) => "numeric",
            CliError::Io { .. } => "io",
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let mut obj = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::MissingArtifact { path, .. }
        | CliError::InvalidArtifact { path, .. }
        | CliError::Io { path, .. } = self
        {
            obj["path"] = json!(path.display().to_string());
        }
        obj.to_string()
    }

    /// Read failures on a file the command needs: absent files are missing
    /// artifacts, anything else is plain I/O.
    pub fn reading(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingArtifact {
                path: path.to_path_buf(),
                reason: "file not found".into(),
            }
        } else {
            CliError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }

    pub fn writing(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ilora_core::Error> for CliError {
    fn from(e: ilora_core::Error) -> Self {
        use ilora_core::Error as E;
        match e {
            E::NonFinite(_)
            | E::OracleFailure { .. }
            | E::Degenerate(_)
            | E::UndefinedMetric(_)
            | E::EmptyBuffer => CliError::Numeric(e.to_string()),
            E::DimensionMismatch { .. } | E::Contract(_) => CliError::Config(e.to_string()),
        }
    }
}
