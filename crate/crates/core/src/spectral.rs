//! Framing, STFT magnitudes, mel filterbank, and the spectral scalar
//! parameters (tilt, centroid, frame energy).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::Waveform;
use crate::error::{Error, Result};

pub const DEFAULT_WIN_LENGTH: usize = 1024;
pub const DEFAULT_HOP_LENGTH: usize = 256;
pub const DEFAULT_N_MELS: usize = 80;
pub const DEFAULT_F_MIN: f64 = 0.0;
pub const DEFAULT_F_MAX: f64 = 8000.0;
/// Linear-domain floor applied before log compression and dB conversion.
pub const MAG_FLOOR: f64 = 1e-5;

/// Shared frame timing for every per-frame trajectory of one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGrid {
    pub win_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
    pub n_frames: usize,
}

impl FrameGrid {
    /// Grid for a signal of `n_samples`. No pre-padding: a signal shorter
    /// than one window has zero frames.
    pub fn for_length(n_samples: usize, win_length: usize, hop_length: usize, sample_rate: u32) -> Self {
        assert!(hop_length > 0 && win_length >= hop_length);
        let n_frames = if n_samples >= win_length {
            1 + (n_samples - win_length) / hop_length
        } else {
            0
        };
        FrameGrid {
            win_length,
            hop_length,
            sample_rate,
            n_frames,
        }
    }

    /// Start sample of frame `t`.
    pub fn frame_start(&self, t: usize) -> usize {
        t * self.hop_length
    }

    /// Center sample of frame `t`.
    pub fn frame_center(&self, t: usize) -> usize {
        t * self.hop_length + self.win_length / 2
    }

    /// Frame time in seconds (start-of-frame convention, as in the CSV output).
    pub fn frame_time_s(&self, t: usize) -> f64 {
        (t * self.hop_length) as f64 / self.sample_rate as f64
    }
}

/// Per-frame magnitude spectra, `n_frames x (n_fft/2 + 1)`.
#[derive(Debug, Clone)]
pub struct MagnitudeSpectrogram {
    pub values: Array2<f32>,
    pub n_fft: usize,
    pub grid: FrameGrid,
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`.
#[derive(Debug, Clone)]
pub struct MelBasis {
    pub weights: Array2<f32>,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
    pub n_fft: usize,
}

/// Log-compressed mel-band energies, `n_frames x n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f32>,
    pub grid: FrameGrid,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

// ---------------------------------------------------------------------------
// Framing and STFT
// ---------------------------------------------------------------------------

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Slice the signal into frames of `win_length` at `hop_length` stride.
/// Frame `t` starts at sample `t * hop_length`; no padding.
pub fn frame_signal(waveform: &Waveform, win_length: usize, hop_length: usize) -> Vec<&[f32]> {
    let grid = FrameGrid::for_length(
        waveform.len(),
        win_length,
        hop_length,
        waveform.sample_rate,
    );
    (0..grid.n_frames)
        .map(|t| &waveform.samples[t * hop_length..t * hop_length + win_length])
        .collect()
}

/// Reusable FFT plan plus analysis window for a fixed `n_fft`.
pub struct StftPlan {
    n_fft: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(n_fft: usize) -> Self {
        let mut planner = FftPlanner::new();
        StftPlan {
            n_fft,
            window: hann_periodic(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Windowed complex spectrum of one frame (bins `0..=n_fft/2`).
    pub fn frame_spectrum(&self, frame: &[f32]) -> Vec<Complex64> {
        assert_eq!(frame.len(), self.n_fft, "frame length must equal n_fft");
        let mut buf: Vec<Complex64> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex64::new(x as f64 * w, 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_bins());
        buf
    }

    /// [`frame_spectrum`](Self::frame_spectrum) for an f64 frame.
    pub fn frame_spectrum_f64(&self, frame: &[f64]) -> Vec<Complex64> {
        assert_eq!(frame.len(), self.n_fft, "frame length must equal n_fft");
        let mut buf: Vec<Complex64> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex64::new(x * w, 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_bins());
        buf
    }

    /// Inverse transform of a half-spectrum back to `n_fft` time samples,
    /// assuming Hermitian symmetry. Includes the 1/n_fft normalization but
    /// not the synthesis window.
    pub fn frame_inverse(&self, half_spectrum: &[Complex64]) -> Vec<f64> {
        assert_eq!(half_spectrum.len(), self.n_bins());
        let n = self.n_fft;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..half_spectrum.len()].copy_from_slice(half_spectrum);
        for k in 1..n / 2 {
            buf[n - k] = half_spectrum[k].conj();
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

/// Magnitude spectrogram of pre-cut frames (periodic Hann, real FFT modulus).
pub fn stft_magnitude(frames: &[&[f32]], plan: &StftPlan, grid: FrameGrid) -> MagnitudeSpectrogram {
    let n_bins = plan.n_bins();
    let mut values = Array2::<f32>::zeros((frames.len(), n_bins));
    for (t, frame) in frames.iter().enumerate() {
        let spec = plan.frame_spectrum(frame);
        for (k, c) in spec.iter().enumerate() {
            values[[t, k]] = c.norm() as f32;
        }
    }
    MagnitudeSpectrogram {
        values,
        n_fft: plan.n_fft(),
        grid,
    }
}

// ---------------------------------------------------------------------------
// Mel filterbank
// ---------------------------------------------------------------------------

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with centers uniformly spaced on the HTK mel scale,
/// area-normalized by 2/(bandwidth).
pub fn mel_filterbank(
    n_fft: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    sample_rate: u32,
) -> Result<MelBasis> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidConfig(format!(
            "mel range {f_min}..{f_max} Hz invalid for sample rate {sample_rate}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = Array2::<f32>::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        let mut nonzero = false;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - lo) / (center - lo);
            let down = (hi - f) / (hi - center);
            let w = up.min(down).max(0.0) * norm;
            if w > 0.0 {
                nonzero = true;
            }
            weights[[m, k]] = w as f32;
        }
        if !nonzero {
            return Err(Error::InvalidConfig(format!(
                "mel filter {m} has empty support (n_fft {n_fft} too coarse)"
            )));
        }
    }

    Ok(MelBasis {
        weights,
        n_mels,
        f_min,
        f_max,
        sample_rate,
        n_fft,
    })
}

/// Apply the filterbank and log-compress: `ln(max(basis . magnitude, 1e-5))`.
pub fn mel_spectrogram(spec: &MagnitudeSpectrogram, basis: &MelBasis) -> MelSpectrogram {
    assert_eq!(
        spec.values.ncols(),
        basis.weights.ncols(),
        "bin count mismatch between spectrogram and mel basis"
    );
    let n_frames = spec.values.nrows();
    let mut values = Array2::<f32>::zeros((n_frames, basis.n_mels));
    for t in 0..n_frames {
        let frame = spec.values.row(t);
        for m in 0..basis.n_mels {
            let row = basis.weights.row(m);
            let mut acc = 0.0f64;
            for (w, v) in row.iter().zip(frame.iter()) {
                acc += *w as f64 * *v as f64;
            }
            values[[t, m]] = acc.max(MAG_FLOOR).ln() as f32;
        }
    }
    MelSpectrogram {
        values,
        grid: spec.grid,
    }
}

// ---------------------------------------------------------------------------
// Spectral scalar parameters
// ---------------------------------------------------------------------------

/// Bin center frequencies in Hz for a half spectrum.
pub fn bin_frequencies(n_fft: usize, sample_rate: u32) -> Array1<f64> {
    Array1::from_iter((0..n_fft / 2 + 1).map(|k| k as f64 * sample_rate as f64 / n_fft as f64))
}

/// Ordinary least-squares slope of dB magnitude against frequency in Hz.
pub fn spectral_tilt(magnitude_frame: &[f32], n_fft: usize, sample_rate: u32) -> f64 {
    assert!(!magnitude_frame.is_empty());
    let n = magnitude_frame.len();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut sum_f = 0.0f64;
    let mut sum_y = 0.0f64;
    let mut sum_ff = 0.0f64;
    let mut sum_fy = 0.0f64;
    for (k, &m) in magnitude_frame.iter().enumerate() {
        let f = k as f64 * bin_hz;
        let y = 20.0 * (m as f64).max(MAG_FLOOR).log10();
        sum_f += f;
        sum_y += y;
        sum_ff += f * f;
        sum_fy += f * y;
    }
    let nf = n as f64;
    let denom = nf * sum_ff - sum_f * sum_f;
    if denom <= 0.0 {
        return 0.0;
    }
    (nf * sum_fy - sum_f * sum_y) / denom
}

/// Magnitude-weighted mean frequency; 0 when the frame is silent.
pub fn spectral_centroid(magnitude_frame: &[f32], n_fft: usize, sample_rate: u32) -> f64 {
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (k, &m) in magnitude_frame.iter().enumerate() {
        num += k as f64 * bin_hz * m as f64;
        den += m as f64;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Sum of squared samples of the raw (unwindowed) frame.
pub fn frame_energy(raw_frame: &[f32]) -> f64 {
    raw_frame.iter().map(|&s| s as f64 * s as f64).sum()
}

// ---------------------------------------------------------------------------
// NFMEL1 binary mel format
// ---------------------------------------------------------------------------

const NFMEL_MAGIC: &[u8; 6] = b"NFMEL1";

/// Write a mel spectrogram in the NFMEL1 interchange format.
pub fn write_nfmel(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    let n_frames = mel.n_frames();
    let n_mels = mel.n_mels();
    let mut out = Vec::with_capacity(6 + 16 + n_frames * n_mels * 4);
    out.extend_from_slice(NFMEL_MAGIC);
    out.extend_from_slice(&(n_frames as u32).to_le_bytes());
    out.extend_from_slice(&(n_mels as u32).to_le_bytes());
    out.extend_from_slice(&mel.grid.sample_rate.to_le_bytes());
    out.extend_from_slice(&(mel.grid.hop_length as u32).to_le_bytes());
    for t in 0..n_frames {
        for m in 0..n_mels {
            out.extend_from_slice(&mel.values[[t, m]].to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read an NFMEL1 file. `win_length` is not stored in the format; the
/// caller supplies it to rebuild the frame grid.
pub fn read_nfmel(path: impl AsRef<Path>, win_length: usize) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |reason: &str| Error::MelFormat {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 22 {
        return Err(fail("file shorter than NFMEL1 header"));
    }
    if &bytes[0..6] != NFMEL_MAGIC {
        return Err(fail("bad magic bytes"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let n_frames = u32_at(6) as usize;
    let n_mels = u32_at(10) as usize;
    let sample_rate = u32_at(14);
    let hop_length = u32_at(18) as usize;

    let expected = 22 + n_frames * n_mels * 4;
    if bytes.len() < expected {
        return Err(fail(&format!(
            "payload truncated: expected {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let mut values = Array2::<f32>::zeros((n_frames, n_mels));
    let mut off = 22;
    for t in 0..n_frames {
        for m in 0..n_mels {
            values[[t, m]] = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            off += 4;
        }
    }
    Ok(MelSpectrogram {
        values,
        grid: FrameGrid {
            win_length,
            hop_length: hop_length.max(1),
            sample_rate: sample_rate.max(1),
            n_frames,
        },
    })
}
