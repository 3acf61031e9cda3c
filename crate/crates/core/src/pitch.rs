//! Fundamental-frequency estimation with voicing decision, voice presets,
//! and interpolation across unvoiced regions.
//!
//! Per frame, the signal is mean-subtracted, Hann-windowed, and its
//! autocorrelation is divided by the window autocorrelation; candidate lags
//! are the local maxima of that normalized function with parabolic peak
//! refinement. The best candidate per frame is picked with an octave cost,
//! followed by a 3-frame median filter on the voiced trajectory.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::spectral::FrameGrid;

/// F0 search and voicing settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct F0Config {
    pub f_min: f64,
    pub f_max: f64,
    /// Normalized autocorrelation strength above which a frame is voiced.
    pub voicing_threshold: f64,
    /// Frames with RMS below this fraction of the utterance peak RMS are unvoiced.
    pub silence_threshold: f64,
    /// Strength penalty per octave below `f_min`-period lags.
    pub octave_cost: f64,
}

impl F0Config {
    pub fn with_range(f_min: f64, f_max: f64) -> Self {
        F0Config {
            f_min,
            f_max,
            voicing_threshold: 0.45,
            silence_threshold: 0.03,
            octave_cost: 0.01,
        }
    }

    /// Low-pitch voice preset: 75-300 Hz.
    pub fn low() -> Self {
        Self::with_range(75.0, 300.0)
    }

    /// High-pitch voice preset: 100-500 Hz.
    pub fn high() -> Self {
        Self::with_range(100.0, 500.0)
    }

    /// Wide first-pass range used by the automatic preset heuristic.
    pub fn wide() -> Self {
        Self::with_range(60.0, 600.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 < self.f_min && self.f_min < self.f_max && self.f_max < nyquist) {
            return Err(Error::InvalidConfig(format!(
                "f0 range {}..{} Hz invalid for sample rate {sample_rate}",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetKind {
    Low,
    High,
}

/// F0 range plus the matching formant ceiling, as selected per voice.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VoicePreset {
    pub kind: PresetKind,
    pub f0: F0Config,
    pub formant_ceiling_hz: f64,
    /// Set when the wide-range pass found no voiced frames and the low
    /// preset was used as a fallback.
    pub no_voicing_fallback: bool,
}

impl VoicePreset {
    pub fn low() -> Self {
        VoicePreset {
            kind: PresetKind::Low,
            f0: F0Config::low(),
            formant_ceiling_hz: 5000.0,
            no_voicing_fallback: false,
        }
    }

    pub fn high() -> Self {
        VoicePreset {
            kind: PresetKind::High,
            f0: F0Config::high(),
            formant_ceiling_hz: 5500.0,
            no_voicing_fallback: false,
        }
    }
}

/// Per-frame pitch trajectory. `log_f0` holds natural-log Hz for voiced
/// frames and NaN for unvoiced frames until [`interpolate_unvoiced`] fills
/// the gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub log_f0: Vec<f32>,
    pub vuv: Vec<bool>,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.log_f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_f0.is_empty()
    }

    pub fn n_voiced(&self) -> usize {
        self.vuv.iter().filter(|&&v| v).count()
    }
}

fn hann_symmetric(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mut r = vec![0.0; max_lag + 1];
    for (lag, slot) in r.iter_mut().enumerate() {
        if lag >= n {
            break;
        }
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += x[i] * x[i + lag];
        }
        *slot = acc;
    }
    r
}

struct Candidate {
    lag: f64,
    strength: f64,
}

/// Depth of the windowed-sinc interpolation used for peak refinement.
const SINC_DEPTH: isize = 24;

/// Hann-windowed sinc interpolation of uniformly sampled data at a
/// fractional position.
fn sinc_interpolate(r: &[f64], x: f64) -> f64 {
    let center = x.round() as isize;
    let lo = (center - SINC_DEPTH).max(0);
    let hi = (center + SINC_DEPTH).min(r.len() as isize - 1);
    let mut acc = 0.0;
    for i in lo..=hi {
        let u = x - i as f64;
        let sinc = if u.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u)
        };
        let taper = 0.5 + 0.5 * (std::f64::consts::PI * u / (SINC_DEPTH as f64 + 0.5)).cos();
        acc += r[i as usize] * sinc * taper;
    }
    acc
}

/// Golden-section maximization of the interpolated autocorrelation in
/// `[x0 - 1, x0 + 1]`.
fn refine_peak(r: &[f64], x0: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (x0 - 1.0, x0 + 1.0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sinc_interpolate(r, c);
    let mut fd = sinc_interpolate(r, d);
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sinc_interpolate(r, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sinc_interpolate(r, d);
        }
    }
    let x = 0.5 * (a + b);
    (x, sinc_interpolate(r, x))
}

/// Local maxima of the normalized autocorrelation, each refined to its
/// true off-grid position and value by windowed-sinc interpolation. Grid
/// values alone underestimate off-grid peaks, which would bias octave
/// comparisons for non-integer periods.
fn find_peaks(r_norm: &[f64], lo: usize, hi: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    for lag in lo.max(1)..=hi.min(r_norm.len().saturating_sub(2)) {
        let (prev, curr, next) = (r_norm[lag - 1], r_norm[lag], r_norm[lag + 1]);
        if curr > prev && curr >= next && curr > 0.0 {
            let (refined, strength) = refine_peak(r_norm, lag as f64);
            out.push(Candidate {
                lag: refined,
                strength,
            });
        }
    }
    out
}

/// Estimate F0 per frame of the shared grid. Frames are voiced when the
/// best candidate's strength exceeds the voicing threshold and the frame
/// is loud enough relative to the utterance peak.
pub fn estimate_f0(waveform: &Waveform, cfg: &F0Config, grid: &FrameGrid) -> Result<PitchTrack> {
    cfg.validate(waveform.sample_rate)?;
    let sr = waveform.sample_rate as f64;
    let n_frames = grid.n_frames;

    // analysis window of at least three periods of the lowest frequency
    let mut w_len = (3.0 * sr / cfg.f_min).ceil() as usize;
    if w_len % 2 == 0 {
        w_len += 1;
    }
    let unvoiced_track = || PitchTrack {
        log_f0: vec![f32::NAN; n_frames],
        vuv: vec![false; n_frames],
    };
    if waveform.len() < w_len {
        return Ok(unvoiced_track());
    }

    let max_lag = ((sr / cfg.f_min).floor() as usize + 1).min(w_len - 2);
    let min_lag = ((sr / cfg.f_max).floor() as usize).saturating_sub(1).max(2);
    // the sinc refinement reads past the search range
    let r_len = (max_lag + SINC_DEPTH as usize + 1).min(w_len - 1);

    let window = hann_symmetric(w_len);
    let r_window = autocorrelation(&window, r_len);

    let half = w_len / 2;
    let x = &waveform.samples;

    // per-frame RMS over the pitch window, and the utterance peak RMS
    let frame_samples = |t: usize| -> Vec<f64> {
        let center = grid.frame_center(t) as isize;
        (0..w_len)
            .map(|i| {
                let idx = center - half as isize + i as isize;
                if idx < 0 || idx >= x.len() as isize {
                    0.0
                } else {
                    x[idx as usize] as f64
                }
            })
            .collect()
    };

    let mut rms = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let fr = frame_samples(t);
        let e: f64 = fr.iter().map(|v| v * v).sum();
        rms.push((e / w_len as f64).sqrt());
    }
    let peak_rms = rms.iter().cloned().fold(0.0f64, f64::max);

    let mut f0 = vec![f64::NAN; n_frames];
    let mut vuv = vec![false; n_frames];

    for t in 0..n_frames {
        if peak_rms <= 0.0 || rms[t] <= cfg.silence_threshold * peak_rms {
            continue;
        }
        let mut fr = frame_samples(t);
        let mean = fr.iter().sum::<f64>() / w_len as f64;
        for (v, w) in fr.iter_mut().zip(&window) {
            *v = (*v - mean) * w;
        }
        let r = autocorrelation(&fr, r_len);
        if r[0] <= 0.0 {
            continue;
        }
        let r_norm: Vec<f64> = r
            .iter()
            .zip(&r_window)
            .map(|(&ri, &rwi)| {
                if rwi > 0.0 {
                    (ri / r[0]) / (rwi / r_window[0])
                } else {
                    0.0
                }
            })
            .collect();

        let candidates = find_peaks(&r_norm, min_lag, max_lag);
        let best = candidates.iter().max_by(|a, b| {
            let score = |c: &Candidate| c.strength - cfg.octave_cost * (cfg.f_min * c.lag / sr).log2();
            score(a).total_cmp(&score(b))
        });
        if let Some(best) = best {
            if best.strength > cfg.voicing_threshold {
                f0[t] = (sr / best.lag).clamp(cfg.f_min, cfg.f_max);
                vuv[t] = true;
            }
        }
    }

    median_filter_voiced(&mut f0, &vuv);

    Ok(PitchTrack {
        log_f0: f0
            .iter()
            .map(|&v| if v.is_nan() { f32::NAN } else { v.ln() as f32 })
            .collect(),
        vuv,
    })
}

/// 3-frame median filter applied to voiced F0 values only.
fn median_filter_voiced(f0: &mut [f64], vuv: &[bool]) {
    let n = f0.len();
    let src = f0.to_vec();
    for t in 0..n {
        if !vuv[t] {
            continue;
        }
        let mut vals: Vec<f64> = (t.saturating_sub(1)..(t + 2).min(n))
            .filter(|&i| vuv[i])
            .map(|i| src[i])
            .collect();
        vals.sort_by(f64::total_cmp);
        f0[t] = if vals.len() % 2 == 1 {
            vals[vals.len() / 2]
        } else {
            0.5 * (vals[vals.len() / 2 - 1] + vals[vals.len() / 2])
        };
    }
}

/// Fill unvoiced gaps of `log_f0` by linear interpolation between flanking
/// voiced values; leading/trailing gaps hold the nearest voiced value.
/// Voicing flags are unchanged.
pub fn interpolate_unvoiced(track: &PitchTrack) -> Result<PitchTrack> {
    let n = track.len();
    let voiced: Vec<usize> = (0..n).filter(|&i| track.vuv[i]).collect();
    if voiced.is_empty() {
        return Err(Error::NoVoicedFrames);
    }
    let mut log_f0 = track.log_f0.clone();

    let first = voiced[0];
    let last = *voiced.last().unwrap();
    for t in 0..first {
        log_f0[t] = log_f0[first];
    }
    for t in last + 1..n {
        log_f0[t] = log_f0[last];
    }
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b > a + 1 {
            let va = log_f0[a] as f64;
            let vb = log_f0[b] as f64;
            for t in a + 1..b {
                let frac = (t - a) as f64 / (b - a) as f64;
                log_f0[t] = (va + (vb - va) * frac) as f32;
            }
        }
    }

    Ok(PitchTrack {
        log_f0,
        vuv: track.vuv.clone(),
    })
}

/// Pick the low or high voice preset from a wide-range first pass:
/// median voiced F0 below 165 Hz selects the low preset. With no voiced
/// frames the low preset is returned with `no_voicing_fallback` set.
pub fn auto_voice_preset(waveform: &Waveform, grid: &FrameGrid) -> Result<VoicePreset> {
    let track = estimate_f0(waveform, &F0Config::wide(), grid)?;
    let mut voiced_f0: Vec<f64> = track
        .log_f0
        .iter()
        .zip(&track.vuv)
        .filter(|(_, &v)| v)
        .map(|(&lf, _)| (lf as f64).exp())
        .collect();
    if voiced_f0.is_empty() {
        let mut preset = VoicePreset::low();
        preset.no_voicing_fallback = true;
        return Ok(preset);
    }
    voiced_f0.sort_by(f64::total_cmp);
    let median = voiced_f0[voiced_f0.len() / 2];
    Ok(if median < 165.0 {
        VoicePreset::low()
    } else {
        VoicePreset::high()
    })
}
