use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad magic, truncated payload, unknown codes).
    #[error("format error: {0}")]
    Format(String),

    /// Data that parses but violates a type invariant or operation contract.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Failure inside a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// The scene generator could not satisfy a placement constraint.
    #[error("scene generation failed: {0}")]
    Placement(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad data rather than by the environment.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::Stage { source, .. } => source.is_validation(),
            _ => true,
        }
    }

    /// Wraps the error with the name of the stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_same_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}
