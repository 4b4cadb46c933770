use std::path::PathBuf;

use thiserror::Error;

/// Error type shared across the pipeline crates.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("clip too short: {actual:.3} s < required {required:.3} s")]
    ClipTooShort { actual: f64, required: f64 },

    #[error("backend failure: {0}")]
    Backend(String),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("unknown track: {0}")]
    UnknownTrack(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error("missing shards: {0:?}")]
    MissingShards(Vec<String>),

    #[error("duplicate row: track_name={track_name} start_time={start_time}")]
    DuplicateRow { track_name: String, start_time: u32 },

    #[error("feature error: {0}")]
    Feature(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("task cycle detected involving: {0:?}")]
    TaskCycle(Vec<String>),

    #[error("task `{task}` failed: {message}")]
    TaskFailed { task: String, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
