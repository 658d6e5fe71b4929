use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("direction below the hemisphere (z = {0})")]
    BelowHemisphere(f64),

    #[error("scene parse error at line {line}, column {column}: {msg}")]
    SceneParse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("invalid scene: {entity}: {msg}")]
    SceneInvalid { entity: String, msg: String },

    #[error("unknown built-in scene `{0}`")]
    UnknownScene(String),

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("malformed image file: {0}")]
    MalformedImage(String),

    #[error("checkpoint version mismatch: expected magic PGG1, found {0:?}")]
    CheckpointVersion([u8; 4]),

    #[error("checkpoint is {found_w}x{found_h}, session expects {want_w}x{want_h}")]
    CheckpointDimensions {
        found_w: u32,
        found_h: u32,
        want_w: usize,
        want_h: usize,
    },

    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    CheckpointTruncated { expected: usize, found: usize },

    #[error("{0}")]
    Usage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(entity: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::SceneInvalid {
            entity: entity.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Usage(_)
                | Error::UnknownScene(_)
                | Error::SceneInvalid { .. }
                | Error::SceneParse { .. }
                | Error::CheckpointDimensions { .. }
        )
    }
}
