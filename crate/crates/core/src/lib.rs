//! neuform: speech analysis, manipulation, and resynthesis.
//!
//! The pipeline extracts nine phonetically meaningful per-frame parameters
//! from a waveform (voicing flag, log F0, F1-F4, spectral tilt, spectral
//! centroid, frame energy), maps manipulated parameter trajectories to
//! log-mel spectrograms with a trainable gated dilated-convolution network,
//! and renders audio either through the built-in Griffin-Lim backend or by
//! exporting mel features for an external neural vocoder.

pub mod audio;
pub mod error;
pub mod eval;
pub mod formant;
pub mod mapper;
pub mod params;
pub mod pipeline;
pub mod pitch;
pub mod spectral;
pub mod stim;
pub mod vocoder;

pub use audio::{read_wav, resample, trim_silence, write_wav, VadConfig, Waveform, WORKING_RATE};
pub use error::{Error, Result};
pub use params::{analyze, Analysis, AnalysisConfig, ContinuousParam, ManipulationSpec, NormStats,
    SpeechParams};
pub use pipeline::DeskPipeline;
pub use spectral::{FrameGrid, MelSpectrogram};
