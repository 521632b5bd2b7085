use std::path::PathBuf;

/// Errors produced while ingesting, indexing, or ranking.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("xml parse error at byte {offset}: {message}")]
    Xml { offset: u64, message: String },

    #[error("duplicate table id `{0}`")]
    DuplicateTableId(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("operator `{0}` has no children")]
    EmptyOperator(&'static str),

    #[error("malformed {what}{}: {detail}", path_note(.path))]
    Format {
        what: &'static str,
        path: Option<PathBuf>,
        detail: String,
    },

    #[error("unsupported index format version {found} (supported: {supported})")]
    IndexVersion { found: u32, supported: u32 },

    #[error("training failed: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            path: None,
            detail: detail.into(),
        }
    }

    /// Attach the offending file path to a `Format` error, if not already set.
    pub fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Format {
                what,
                path: None,
                detail,
            } => Error::Format {
                what,
                path: Some(path.into()),
                detail,
            },
            other => other,
        }
    }
}

fn path_note(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
