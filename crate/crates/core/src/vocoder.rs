//! Waveform rendering: log-mel inversion to linear magnitudes, Griffin-Lim
//! phase reconstruction, per-frame energy matching, and the NFMEL1 export
//! seam for external neural vocoders.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::spectral::{
    read_nfmel, write_nfmel, FrameGrid, MagnitudeSpectrogram, MelBasis, MelSpectrogram, StftPlan,
    MAG_FLOOR,
};

/// Griffin-Lim settings. Momentum 0 gives the plain alternating
/// projections; the default 0.99 is the accelerated variant.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct GriffinLimConfig {
    pub n_iters: usize,
    pub momentum: f64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        GriffinLimConfig {
            n_iters: 60,
            momentum: 0.99,
        }
    }
}

impl GriffinLimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iters == 0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "griffin-lim needs n_iters >= 1 and momentum in [0,1), got {} / {}",
                self.n_iters, self.momentum
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Mel inversion
// ---------------------------------------------------------------------------

/// Solves per frame for non-negative magnitudes via the minimum-norm
/// least-squares solution of `basis * m = exp(mel)`, negatives clipped.
/// Factors the filterbank Gram matrix once.
pub struct MelInverter {
    basis: MelBasis,
    gram: Cholesky<f64, Dyn>,
}

impl MelInverter {
    pub fn new(basis: &MelBasis) -> Result<Self> {
        let (n_mels, n_bins) = basis.weights.dim();
        let mut gram = DMatrix::<f64>::zeros(n_mels, n_mels);
        for a in 0..n_mels {
            for b in a..n_mels {
                let mut acc = 0.0f64;
                for k in 0..n_bins {
                    acc += basis.weights[[a, k]] as f64 * basis.weights[[b, k]] as f64;
                }
                gram[(a, b)] = acc;
                gram[(b, a)] = acc;
            }
        }
        let gram = Cholesky::new(gram).ok_or_else(|| {
            Error::InvalidConfig("mel filterbank Gram matrix is not positive definite".into())
        })?;
        Ok(MelInverter {
            basis: basis.clone(),
            gram,
        })
    }

    pub fn invert(&self, mel: &MelSpectrogram) -> MagnitudeSpectrogram {
        let (n_mels, n_bins) = self.basis.weights.dim();
        assert_eq!(mel.n_mels(), n_mels, "mel band count mismatch");
        let n_frames = mel.n_frames();
        let mut values = Array2::<f32>::zeros((n_frames, n_bins));
        for t in 0..n_frames {
            // undo the log compression and its floor, so silence maps to
            // exact zeros instead of floor-level noise
            let target = DVector::from_iterator(
                n_mels,
                (0..n_mels).map(|b| ((mel.values[[t, b]] as f64).exp() - MAG_FLOOR).max(0.0)),
            );
            let weights = self.gram.solve(&target);
            for k in 0..n_bins {
                let mut acc = 0.0f64;
                for b in 0..n_mels {
                    acc += self.basis.weights[[b, k]] as f64 * weights[b];
                }
                values[[t, k]] = acc.max(0.0) as f32;
            }
        }
        MagnitudeSpectrogram {
            values,
            n_fft: self.basis.n_fft,
            grid: mel.grid,
        }
    }
}

/// One-shot [`MelInverter`] use.
pub fn mel_to_linear(mel: &MelSpectrogram, basis: &MelBasis) -> Result<MagnitudeSpectrogram> {
    Ok(MelInverter::new(basis)?.invert(mel))
}

// ---------------------------------------------------------------------------
// Griffin-Lim
// ---------------------------------------------------------------------------

/// Iterative phase reconstruction. Output length is
/// `(n_frames - 1) * hop + win`, peak-normalized to 0.95.
pub fn griffin_lim(magnitude: &MagnitudeSpectrogram, cfg: &GriffinLimConfig) -> Result<Waveform> {
    Ok(griffin_lim_with_history(magnitude, cfg)?.0)
}

/// [`griffin_lim`] that also reports the spectral-convergence error
/// (`||stft(x)| - A| / |A|` in dB) after each iteration.
pub fn griffin_lim_with_history(
    magnitude: &MagnitudeSpectrogram,
    cfg: &GriffinLimConfig,
) -> Result<(Waveform, Vec<f64>)> {
    cfg.validate()?;
    let grid = magnitude.grid;
    let n_frames = magnitude.values.nrows();
    if n_frames == 0 {
        return Ok((Waveform::new(Vec::new(), grid.sample_rate), Vec::new()));
    }
    let n_bins = magnitude.values.ncols();
    let plan = StftPlan::new(magnitude.n_fft);
    assert_eq!(n_bins, plan.n_bins(), "bin count inconsistent with n_fft");

    let target: Vec<f64> = magnitude.values.iter().map(|&v| v as f64).collect();
    let target_norm = target.iter().map(|v| v * v).sum::<f64>().sqrt();

    // zero-phase initialization
    let mut estimate: Vec<Complex64> = target.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut prev_rebuilt: Option<Vec<Complex64>> = None;
    let mut history = Vec::with_capacity(cfg.n_iters);
    let momentum_blend = cfg.momentum / (1.0 + cfg.momentum);

    for _ in 0..cfg.n_iters {
        let signal = istft(&estimate, n_frames, n_bins, &plan, &grid);
        let rebuilt = stft_of(&signal, n_frames, &plan, &grid);

        let mut err = 0.0f64;
        for (c, &a) in rebuilt.iter().zip(&target) {
            let d = c.norm() - a;
            err += d * d;
        }
        let sc = err.sqrt() / target_norm.max(1e-300);
        history.push(20.0 * sc.max(1e-300).log10());

        for (i, slot) in estimate.iter_mut().enumerate() {
            let mut update = rebuilt[i];
            if let Some(prev) = &prev_rebuilt {
                update -= prev[i] * momentum_blend;
            }
            let norm = update.norm();
            let phase = if norm > 1e-300 {
                update / norm
            } else {
                Complex64::new(1.0, 0.0)
            };
            *slot = phase * target[i];
        }
        prev_rebuilt = Some(rebuilt);
    }

    let mut signal = istft(&estimate, n_frames, n_bins, &plan, &grid);
    let peak = signal.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let gain = 0.95 / peak;
        for v in &mut signal {
            *v *= gain;
        }
    }
    let samples: Vec<f32> = signal.iter().map(|&v| v as f32).collect();
    Ok((Waveform::new(samples, grid.sample_rate), history))
}

fn istft(
    spectra: &[Complex64],
    n_frames: usize,
    n_bins: usize,
    plan: &StftPlan,
    grid: &FrameGrid,
) -> Vec<f64> {
    let win = plan.n_fft();
    let hop = grid.hop_length;
    let out_len = (n_frames - 1) * hop + win;
    let window = plan.window();
    let mut out = vec![0.0f64; out_len];
    let mut weight = vec![0.0f64; out_len];
    for t in 0..n_frames {
        let frame = plan.frame_inverse(&spectra[t * n_bins..(t + 1) * n_bins]);
        let start = t * hop;
        for i in 0..win {
            out[start + i] += frame[i] * window[i];
            weight[start + i] += window[i] * window[i];
        }
    }
    for (v, &w) in out.iter_mut().zip(&weight) {
        if w > 1e-9 {
            *v /= w;
        } else {
            *v = 0.0;
        }
    }
    out
}

fn stft_of(signal: &[f64], n_frames: usize, plan: &StftPlan, grid: &FrameGrid) -> Vec<Complex64> {
    let win = plan.n_fft();
    let hop = grid.hop_length;
    let mut out = Vec::with_capacity(n_frames * plan.n_bins());
    for t in 0..n_frames {
        let frame = &signal[t * hop..t * hop + win];
        out.extend(plan.frame_spectrum_f64(frame));
    }
    out
}

// ---------------------------------------------------------------------------
// Post-processing gain
// ---------------------------------------------------------------------------

const GAIN_MIN: f64 = 0.125;
const GAIN_MAX: f64 = 8.0;

/// Re-scale the signal so its per-frame energy tracks `target_energy`.
/// Gains are computed at frame centers, clamped to `[0.125, 8]`, and
/// linearly interpolated between centers.
pub fn match_energy(waveform: &Waveform, target_energy: &[f32], grid: &FrameGrid) -> Waveform {
    assert_eq!(target_energy.len(), grid.n_frames, "energy/grid mismatch");
    if grid.n_frames == 0 || waveform.is_empty() {
        return waveform.clone();
    }
    let x = &waveform.samples;
    let win = grid.win_length;

    let mut gains = Vec::with_capacity(grid.n_frames);
    for t in 0..grid.n_frames {
        let start = grid.frame_start(t).min(x.len());
        let end = (start + win).min(x.len());
        let mut extracted = 0.0f64;
        for &s in &x[start..end] {
            extracted += s as f64 * s as f64;
        }
        let g = (target_energy[t] as f64 / extracted.max(1e-12)).sqrt();
        gains.push(g.clamp(GAIN_MIN, GAIN_MAX));
    }

    let center = |t: usize| grid.frame_center(t) as f64;
    let mut out = Vec::with_capacity(x.len());
    for (i, &s) in x.iter().enumerate() {
        let pos = i as f64;
        let g = if pos <= center(0) {
            gains[0]
        } else if pos >= center(grid.n_frames - 1) {
            gains[grid.n_frames - 1]
        } else {
            let t = ((pos - center(0)) / grid.hop_length as f64).floor() as usize;
            let t = t.min(grid.n_frames - 2);
            let frac = (pos - center(t)) / (center(t + 1) - center(t));
            gains[t] * (1.0 - frac) + gains[t + 1] * frac
        };
        out.push((s as f64 * g) as f32);
    }
    Waveform::new(out, waveform.sample_rate)
}

// ---------------------------------------------------------------------------
// Mel export seam
// ---------------------------------------------------------------------------

/// Write the NFMEL1 file consumed by external vocoders.
pub fn export_mel(path: impl AsRef<Path>, mel: &MelSpectrogram) -> Result<()> {
    write_nfmel(path, mel)
}

/// Read an NFMEL1 file back.
pub fn import_mel(path: impl AsRef<Path>, win_length: usize) -> Result<MelSpectrogram> {
    read_nfmel(path, win_length)
}
