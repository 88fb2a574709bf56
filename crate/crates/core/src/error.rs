use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("subset {subset_id} has no positive instances")]
    EmptySubset { subset_id: usize },

    #[error("classes without an owning teacher: {0:?}")]
    Coverage(Vec<usize>),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("incomplete run directory: missing {}", .0.display())]
    PartialRun(PathBuf),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Innermost error, looking through stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numeric, 5 integrity.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Coverage(_) => 2,
            Error::Numeric { .. } | Error::Shape(_) => 4,
            Error::Integrity(_) | Error::PartialRun(_) | Error::Comparison(_) => 5,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
