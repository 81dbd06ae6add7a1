use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// Malformed file contents. `line` is 1-based for text formats.
    #[error("format error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("alignment for {utt_id} is not contiguous: {msg}")]
    Contiguity { utt_id: String, msg: String },

    #[error("alignment for {utt_id} does not cover the utterance: {msg}")]
    Coverage { utt_id: String, msg: String },

    #[error("cannot embed a segment with zero frames")]
    EmptySegment,

    #[error("k-means needs at least k={k} samples, got {n}")]
    InsufficientSamples { k: usize, n: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("key error: {0}")]
    Key(String),

    #[error("duplicate key: {0}")]
    DuplicateKey(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn format_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line: Some(line),
            msg: msg.into(),
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data/format, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::DuplicateKey(_) => 2,
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
