//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis/synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed wav file at byte {offset}: {reason}")]
    MalformedWav { offset: u64, reason: String },

    #[error("unsupported wav codec (format tag {format_tag}, {bits_per_sample} bits)")]
    UnsupportedWavCodec { format_tag: u16, bits_per_sample: u16 },

    #[error("unsupported wav channel count {channels} (expected 1 or 2)")]
    UnsupportedChannelCount { channels: u16 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample rate mismatch: waveform is {got} Hz, analysis expects {expected} Hz")]
    SampleRateMismatch { got: u32, expected: u32 },

    #[error("no voiced frames in utterance")]
    NoVoicedFrames,

    #[error("formant F{index} missing in every frame")]
    FormantMissingEverywhere { index: usize },

    #[error("polynomial root finding failed at frame {frame}: residual {residual:.3e}")]
    RootFinding { frame: usize, residual: f64 },

    #[error("manipulation factor for {param} must be positive, got {factor}")]
    NonPositiveFactor { param: String, factor: f64 },

    #[error("duplicate manipulation action for {param}")]
    DuplicateManipulation { param: String },

    #[error("empty parameter collection")]
    EmptyCollection,

    #[error("frame count mismatch: {left} vs {right} frames")]
    FrameCountMismatch { left: usize, right: usize },

    #[error("no mutually voiced frames between reference and test")]
    NoMutuallyVoicedFrames,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("mel file {path}: {reason}")]
    MelFormat { path: PathBuf, reason: String },

    #[error("checkpoint {path}: {reason}")]
    CheckpointFormat { path: PathBuf, reason: String },

    #[error("training aborted at update {step}: loss is not finite")]
    NonFiniteLoss { step: usize },

    #[error("empty training dataset (all {skipped} utterances shorter than the crop length)")]
    EmptyDataset { skipped: usize },

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("csv file {path} line {line}: {reason}")]
    CsvFormat {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
