use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read wav file {path}: {reason}")]
    WavRead { path: PathBuf, reason: String },

    #[error("multichannel input ({channels} channels) in {path}; expected mono")]
    Multichannel { path: PathBuf, channels: u16 },

    #[error("unsupported wav encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("cannot write wav file {path}: {reason}")]
    WavWrite { path: PathBuf, reason: String },

    #[error("waveform too short: need at least {needed} samples, got {got}")]
    ShortInput { needed: usize, got: usize },

    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("zero-power interferer")]
    ZeroPowerInterferer,

    #[error("empty room impulse response")]
    EmptyRir,

    #[error("empty augmentation menu")]
    EmptyMenu,

    #[error("empty score list: {which}")]
    EmptyScores { which: &'static str },

    #[error("empty dataset split: {which}")]
    EmptySplit { which: &'static str },

    #[error("empty manifest: {which}")]
    EmptyManifest { which: &'static str },

    #[error("non-finite input waveform")]
    NonFiniteInput,

    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFiniteLoss { step: u64, diagnostic: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },

    #[error("manifest error at {path}:{line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing artifact ({what}): {path}")]
    MissingArtifact { what: &'static str, path: PathBuf },

    #[error("bad checkpoint {path}: {reason}")]
    CheckpointFormat { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Convenience constructor for [`Error::Io`].
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
