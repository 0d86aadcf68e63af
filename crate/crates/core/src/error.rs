use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid audio: {0}")]
    InvalidAudio(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed WAV file: {0}")]
    MalformedWav(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedCodec(String),

    #[error("degenerate twin kernel: overlap weight {value:e} at output position {position}")]
    DegenerateKernel { position: usize, value: f64 },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}:{line}: {msg}")]
    ConfigFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("external codec failed: {0}")]
    ExternalCodec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) => Error::Io(io),
            hound::Error::Unsupported => Error::UnsupportedCodec("format not supported".into()),
            hound::Error::FormatError(msg) => Error::MalformedWav(msg.to_string()),
            other => Error::MalformedWav(other.to_string()),
        }
    }
}

impl Error {
    /// Process exit status: 2 usage or configuration, 3 input format, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::ConfigFile { .. } => 2,
            Error::DegenerateKernel { .. } | Error::NonFinite(_) | Error::Diverged { .. } => 4,
            Error::InvalidAudio(_)
            | Error::TooShort { .. }
            | Error::LengthMismatch { .. }
            | Error::ShapeMismatch(_)
            | Error::Empty(_)
            | Error::MalformedWav(_)
            | Error::UnsupportedCodec(_)
            | Error::Checkpoint(_)
            | Error::ExternalCodec(_)
            | Error::Io(_) => 3,
        }
    }
}
