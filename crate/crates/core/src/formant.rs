//! Formant frequency estimation: pre-emphasis, Burg LPC, polynomial root
//! finding, pole-to-formant conversion, and trajectory assembly.
//!
//! Analysis runs on a copy of the signal decimated to twice the formant
//! ceiling, so the pole budget of the order-10 predictor is spent entirely
//! below the ceiling.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{resample, Waveform};
use crate::error::{Error, Result};
use crate::spectral::FrameGrid;

/// LPC analysis settings for formant extraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LpcConfig {
    /// Predictor order; twice the formant budget.
    pub order: usize,
    pub window_ms: f64,
    pub pre_emphasis_from_hz: f64,
    /// Highest admissible formant frequency. 5000 Hz for the low voice
    /// preset, 5500 Hz for the high preset.
    pub ceiling_hz: f64,
    pub max_formants: usize,
    /// Candidates broader than this are discarded as tilt artifacts.
    pub max_bandwidth_hz: f64,
}

impl LpcConfig {
    pub fn with_ceiling(ceiling_hz: f64) -> Self {
        LpcConfig {
            order: 10,
            window_ms: 25.0,
            pre_emphasis_from_hz: 50.0,
            ceiling_hz,
            max_formants: 5,
            max_bandwidth_hz: 700.0,
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.order == 0 || self.order != 2 * self.max_formants {
            return Err(Error::InvalidConfig(format!(
                "lpc order {} must be twice max_formants {}",
                self.order, self.max_formants
            )));
        }
        if !(0.0 < self.ceiling_hz && self.ceiling_hz <= sample_rate as f64 / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "formant ceiling {} Hz outside (0, {}]",
                self.ceiling_hz,
                sample_rate as f64 / 2.0
            )));
        }
        Ok(())
    }
}

impl Default for LpcConfig {
    fn default() -> Self {
        Self::with_ceiling(5000.0)
    }
}

/// One resonance candidate from a single analysis frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormantCandidate {
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
}

/// Interpolated F1-F4 trajectories. `tracks[i]` is F(i+1) in Hz;
/// `missing[i][t]` marks frames whose value was filled by interpolation.
#[derive(Debug, Clone)]
pub struct FormantTracks {
    pub tracks: [Vec<f32>; 4],
    pub missing: [Vec<bool>; 4],
}

impl FormantTracks {
    pub fn n_frames(&self) -> usize {
        self.tracks[0].len()
    }
}

/// First-order pre-emphasis: `y[n] = x[n] - a x[n-1]` with
/// `a = exp(-2 pi from_hz / sample_rate)` and `y[0] = x[0] (1 - a)`.
pub fn pre_emphasis(frame: &[f64], sample_rate: u32, from_hz: f64) -> Vec<f64> {
    assert!(!frame.is_empty());
    let a = (-std::f64::consts::TAU * from_hz / sample_rate as f64).exp();
    let mut out = Vec::with_capacity(frame.len());
    out.push(frame[0] * (1.0 - a));
    for i in 1..frame.len() {
        out.push(frame[i] - a * frame[i - 1]);
    }
    out
}

/// Burg's method: reflection coefficients minimizing the combined
/// forward/backward prediction error. Returns `(a, k)` where `a` are the
/// predictor coefficients of `A(z) = 1 + a[0] z^-1 + ... + a[p-1] z^-p`
/// and `k` the reflection coefficients; `None` for an all-zero frame.
pub fn burg_lpc_with_reflection(frame: &[f64], order: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = frame.len();
    assert!(n > order, "frame length {n} must exceed order {order}");
    let energy: f64 = frame.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return None;
    }

    let mut fwd = frame.to_vec();
    let mut bwd = frame.to_vec();
    let mut a = vec![0.0f64; order + 1];
    a[0] = 1.0;
    let mut reflections = Vec::with_capacity(order);

    for m in 0..order {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for i in m + 1..n {
            num += fwd[i] * bwd[i - 1];
            den += fwd[i] * fwd[i] + bwd[i - 1] * bwd[i - 1];
        }
        if den <= 0.0 {
            // prediction error already zero; remaining coefficients stay zero
            reflections.resize(order, 0.0);
            break;
        }
        let k = -2.0 * num / den;
        reflections.push(k);

        let prev = a.clone();
        for i in 1..=m + 1 {
            a[i] = prev[i] + k * prev[m + 1 - i];
        }
        for i in (m + 1..n).rev() {
            let f_old = fwd[i];
            fwd[i] = f_old + k * bwd[i - 1];
            bwd[i] = bwd[i - 1] + k * f_old;
        }
    }

    Some((a[1..].to_vec(), reflections))
}

/// Burg predictor coefficients `a[1..=order]`; `None` for an all-zero frame.
pub fn burg_lpc(frame: &[f64], order: usize) -> Option<Vec<f64>> {
    burg_lpc_with_reflection(frame, order).map(|(a, _)| a)
}

/// All roots of `A(z) = 1 + a[0] z^-1 + ... + a[p-1] z^-p`, computed as the
/// eigenvalues of the companion matrix of `z^p + a[0] z^(p-1) + ... + a[p-1]`.
/// Trailing zero coefficients are deflated into exact zero roots first;
/// `frame_index` is only used for error context.
pub fn lpc_roots(coefficients: &[f64], frame_index: usize) -> Result<Vec<Complex64>> {
    let p = coefficients.len();
    assert!(p >= 1, "order must be at least 1");

    let reduced = match coefficients.iter().rposition(|&c| c != 0.0) {
        Some(last) => &coefficients[..=last],
        None => &coefficients[..0],
    };
    let mut roots: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); p - reduced.len()];
    if reduced.is_empty() {
        return Ok(roots);
    }

    let q = reduced.len();
    let mut companion = nalgebra::DMatrix::<f64>::zeros(q, q);
    for (j, &c) in reduced.iter().enumerate() {
        companion[(0, j)] = -c;
    }
    for i in 1..q {
        companion[(i, i - 1)] = 1.0;
    }
    let eigen = companion.complex_eigenvalues();
    roots.extend(eigen.iter().map(|e| Complex64::new(e.re, e.im)));

    // residual check relative to the coefficient scale
    let scale = 1.0 + coefficients.iter().map(|c| c.abs()).sum::<f64>();
    for root in &roots {
        let mut value = Complex64::new(1.0, 0.0);
        for &c in coefficients {
            value = value * root + Complex64::new(c, 0.0);
        }
        let residual = value.norm();
        if !(residual <= 1e-6 * scale) {
            return Err(Error::RootFinding {
                frame: frame_index,
                residual,
            });
        }
    }
    Ok(roots)
}

/// Convert poles to formant candidates: each root with positive imaginary
/// part maps to `F = angle * sr / 2pi`, `B = -ln|r| * sr / pi`. Candidates
/// outside `(50 Hz, ceiling)` or broader than `max_bandwidth_hz` are
/// dropped; the rest are sorted by frequency.
pub fn roots_to_formants(
    roots: &[Complex64],
    sample_rate: u32,
    ceiling_hz: f64,
    max_bandwidth_hz: f64,
) -> Vec<FormantCandidate> {
    let sr = sample_rate as f64;
    let mut out: Vec<FormantCandidate> = roots
        .iter()
        .filter(|r| r.im > 0.0)
        .map(|r| FormantCandidate {
            frequency_hz: r.arg() * sr / std::f64::consts::TAU,
            bandwidth_hz: -r.norm().ln() * sr / std::f64::consts::PI,
        })
        .filter(|c| c.frequency_hz > 50.0 && c.frequency_hz < ceiling_hz)
        .filter(|c| c.bandwidth_hz > 0.0 && c.bandwidth_hz < max_bandwidth_hz)
        .collect();
    out.sort_by(|a, b| a.frequency_hz.total_cmp(&b.frequency_hz));
    out
}

/// Construct the pole with positive imaginary part for a given formant
/// frequency and bandwidth; the inverse of [`roots_to_formants`].
pub fn formant_to_pole(frequency_hz: f64, bandwidth_hz: f64, sample_rate: u32) -> Complex64 {
    let sr = sample_rate as f64;
    let radius = (-std::f64::consts::PI * bandwidth_hz / sr).exp();
    let angle = std::f64::consts::TAU * frequency_hz / sr;
    Complex64::from_polar(radius, angle)
}

/// Per-frame formant candidates for every frame of the shared grid.
///
/// The waveform is decimated to `2 * ceiling_hz`, pre-emphasized once, and
/// analyzed with a Hann window of `window_ms` centered on each grid frame.
/// Degenerate (all-zero) frames yield empty candidate lists.
pub fn analyze_formant_frames(
    waveform: &Waveform,
    grid: &FrameGrid,
    cfg: &LpcConfig,
) -> Result<Vec<Vec<FormantCandidate>>> {
    cfg.validate(waveform.sample_rate)?;
    let target_rate = (2.0 * cfg.ceiling_hz).round() as u32;
    let decimated = resample(waveform, target_rate);

    let samples64: Vec<f64> = decimated.samples.iter().map(|&s| s as f64).collect();
    let emphasized = if samples64.is_empty() {
        samples64
    } else {
        pre_emphasis(&samples64, target_rate, cfg.pre_emphasis_from_hz)
    };

    let mut w_len = (cfg.window_ms / 1000.0 * target_rate as f64).round() as usize;
    if w_len % 2 == 0 {
        w_len += 1;
    }
    if w_len <= cfg.order {
        return Err(Error::InvalidConfig(format!(
            "formant window of {w_len} samples too short for order {}",
            cfg.order
        )));
    }
    let window: Vec<f64> = (0..w_len)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (w_len - 1) as f64).cos())
        .collect();
    let half = w_len / 2;

    let mut all = Vec::with_capacity(grid.n_frames);
    for t in 0..grid.n_frames {
        let center_s = grid.frame_center(t) as f64 / grid.sample_rate as f64;
        let center = (center_s * target_rate as f64).round() as isize;
        let mut frame = vec![0.0f64; w_len];
        for (i, slot) in frame.iter_mut().enumerate() {
            let idx = center - half as isize + i as isize;
            if idx >= 0 && (idx as usize) < emphasized.len() {
                *slot = emphasized[idx as usize] * window[i];
            }
        }
        let candidates = match burg_lpc(&frame, cfg.order) {
            None => Vec::new(),
            Some(a) => {
                let roots = lpc_roots(&a, t)?;
                roots_to_formants(&roots, target_rate, cfg.ceiling_hz, cfg.max_bandwidth_hz)
            }
        };
        all.push(candidates);
    }
    Ok(all)
}

/// Assemble F1-F4 trajectories: per frame the four lowest candidates in
/// ascending order, missing entries filled by linear interpolation over
/// time with edge hold. Fails when a formant is absent from every frame.
pub fn track_formants(
    candidates: &[Vec<FormantCandidate>],
    grid: &FrameGrid,
) -> Result<FormantTracks> {
    assert_eq!(candidates.len(), grid.n_frames, "candidate/grid mismatch");
    let n = candidates.len();
    let mut tracks: [Vec<f32>; 4] = std::array::from_fn(|_| vec![f32::NAN; n]);
    let mut missing: [Vec<bool>; 4] = std::array::from_fn(|_| vec![true; n]);

    for (t, frame) in candidates.iter().enumerate() {
        for (i, cand) in frame.iter().take(4).enumerate() {
            tracks[i][t] = cand.frequency_hz as f32;
            missing[i][t] = false;
        }
    }

    for i in 0..4 {
        let present: Vec<usize> = (0..n).filter(|&t| !missing[i][t]).collect();
        if present.is_empty() {
            return Err(Error::FormantMissingEverywhere { index: i + 1 });
        }
        let first = present[0];
        let last = *present.last().unwrap();
        for t in 0..first {
            tracks[i][t] = tracks[i][first];
        }
        for t in last + 1..n {
            tracks[i][t] = tracks[i][last];
        }
        for pair in present.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b > a + 1 {
                let va = tracks[i][a] as f64;
                let vb = tracks[i][b] as f64;
                for t in a + 1..b {
                    let frac = (t - a) as f64 / (b - a) as f64;
                    tracks[i][t] = (va + (vb - va) * frac) as f32;
                }
            }
        }
    }

    // interpolation may locally disorder neighbors; restore f1<=f2<=f3<=f4
    for t in 0..n {
        for i in 1..4 {
            if tracks[i][t] < tracks[i - 1][t] {
                tracks[i][t] = tracks[i - 1][t];
            }
        }
    }

    Ok(FormantTracks { tracks, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pre_emphasis_coefficient() {
        let a = (-std::f64::consts::TAU * 50.0 / 22_050.0).exp();
        assert_abs_diff_eq!(a, 0.98585, epsilon = 1e-5);

        // DC input attenuated by (1 - a) everywhere
        let frame = vec![1.0f64; 64];
        let out = pre_emphasis(&frame, 22_050, 50.0);
        for &y in &out {
            assert_abs_diff_eq!(y, 1.0 - a, epsilon = 1e-12);
        }
    }

    #[test]
    fn pre_emphasis_zero_hz_is_differencing() {
        let frame = vec![3.0, 5.0, 2.0];
        let out = pre_emphasis(&frame, 22_050, 0.0);
        assert_abs_diff_eq!(out[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], -3.0, epsilon = 1e-12);
    }

    fn ar2_signal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0f64; n];
        for i in 2..n {
            let e: f64 = rng.gen_range(-1.0..1.0);
            x[i] = 1.27 * x[i - 1] - 0.81 * x[i - 2] + e;
        }
        x
    }

    #[test]
    fn burg_recovers_ar2() {
        let x = ar2_signal(10_000, 7);
        let a = burg_lpc(&x, 2).unwrap();
        assert_abs_diff_eq!(a[0], -1.27, epsilon = 0.02);
        assert_abs_diff_eq!(a[1], 0.81, epsilon = 0.02);
    }

    #[test]
    fn burg_on_white_noise_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = burg_lpc(&x, 2).unwrap();
        assert!(a.iter().all(|c| c.abs() <= 0.1), "coefficients {a:?}");
    }

    #[test]
    fn burg_impulse_frame_is_finite() {
        let mut x = vec![0.0f64; 64];
        x[10] = 1.0;
        let a = burg_lpc(&x, 10).unwrap();
        assert!(a.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn burg_zero_frame_is_degenerate() {
        assert!(burg_lpc(&vec![0.0f64; 64], 10).is_none());
    }

    #[test]
    fn burg_reflections_bounded_and_poles_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..20 {
            let x: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (a, k) = burg_lpc_with_reflection(&x, 10).unwrap();
            assert!(k.iter().all(|v| v.abs() < 1.0), "reflections {k:?}");
            let roots = lpc_roots(&a, trial).unwrap();
            assert!(roots.iter().all(|r| r.norm() < 1.0), "poles {roots:?}");
        }
    }

    #[test]
    fn roots_of_known_quadratic() {
        // A(z) from a = (-1.27279, 0.81): poles at 0.9 exp(+-i pi/4)
        let a = [-2.0f64.sqrt() * 0.9, 0.81];
        let roots = lpc_roots(&a, 0).unwrap();
        assert_eq!(roots.len(), 2);
        for r in &roots {
            assert_abs_diff_eq!(r.norm(), 0.9, epsilon = 1e-9);
            assert_abs_diff_eq!(r.arg().abs(), std::f64::consts::FRAC_PI_4, epsilon = 1e-9);
        }
    }

    #[test]
    fn roots_of_zero_polynomial_are_zero() {
        let roots = lpc_roots(&[0.0; 6], 0).unwrap();
        assert!(roots.iter().all(|r| r.norm() < 1e-12));
    }

    #[test]
    fn root_of_linear_polynomial() {
        let roots = lpc_roots(&[-0.5], 0).unwrap();
        assert_eq!(roots.len(), 1);
        assert_abs_diff_eq!(roots[0].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(roots[0].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pole_to_formant_closed_form() {
        let r = Complex64::from_polar(0.98, std::f64::consts::TAU * 500.0 / 22_050.0);
        let cands = roots_to_formants(&[r, r.conj()], 22_050, 5500.0, 700.0);
        // the conjugate pair contributes exactly one candidate
        assert_eq!(cands.len(), 1);
        assert_abs_diff_eq!(cands[0].frequency_hz, 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(cands[0].bandwidth_hz, 141.8, epsilon = 0.05);
    }

    #[test]
    fn real_roots_yield_no_candidates() {
        let roots = [Complex64::new(0.7, 0.0), Complex64::new(-0.3, 0.0)];
        assert!(roots_to_formants(&roots, 22_050, 5500.0, 700.0).is_empty());
    }

    #[test]
    fn pole_formant_roundtrip_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let f = rng.gen_range(60.0..5400.0);
            let b = rng.gen_range(10.0..690.0);
            let pole = formant_to_pole(f, b, 22_050);
            let cands = roots_to_formants(&[pole], 22_050, 5500.0, 700.0);
            assert_eq!(cands.len(), 1);
            assert!((cands[0].frequency_hz - f).abs() <= 1e-9 * f);
            assert!((cands[0].bandwidth_hz - b).abs() <= 1e-9 * b);
        }
    }

    #[test]
    fn tracking_takes_lowest_four_and_interpolates() {
        let grid = FrameGrid {
            win_length: 1024,
            hop_length: 256,
            sample_rate: 22_050,
            n_frames: 3,
        };
        let cand = |f: f64| FormantCandidate {
            frequency_hz: f,
            bandwidth_hz: 100.0,
        };
        let full = vec![cand(550.0), cand(1700.0), cand(2600.0), cand(3500.0), cand(4400.0)];
        let three = vec![cand(550.0), cand(1700.0), cand(2600.0)];
        let frames = vec![full.clone(), three, full];
        let tracks = track_formants(&frames, &grid).unwrap();
        assert_eq!(tracks.tracks[0], vec![550.0, 550.0, 550.0]);
        assert_eq!(tracks.tracks[3][0], 3500.0);
        // middle-frame F4 interpolated between its neighbors
        assert!(tracks.missing[3][1]);
        assert_abs_diff_eq!(tracks.tracks[3][1], 3500.0, epsilon = 1e-3);
        // sorted invariant
        for t in 0..3 {
            for i in 1..4 {
                assert!(tracks.tracks[i][t] >= tracks.tracks[i - 1][t]);
            }
        }
    }

    #[test]
    fn tracking_fails_when_formant_never_seen() {
        let grid = FrameGrid {
            win_length: 1024,
            hop_length: 256,
            sample_rate: 22_050,
            n_frames: 2,
        };
        let cand = |f: f64| FormantCandidate {
            frequency_hz: f,
            bandwidth_hz: 100.0,
        };
        let frames = vec![
            vec![cand(500.0), cand(1500.0)],
            vec![cand(520.0), cand(1480.0)],
        ];
        match track_formants(&frames, &grid) {
            Err(Error::FormantMissingEverywhere { index: 3 }) => {}
            other => panic!("expected F3 missing, got {other:?}"),
        }
    }
}
