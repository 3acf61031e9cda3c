//! Synthetic stimulus generation: impulse-train source through resonator
//! cascades, tones, and noise. Used for desk-scale corpora and controlled
//! accuracy checks, where ground-truth parameter values must be known.

use rand::Rng;

use crate::audio::Waveform;

/// A static four-resonance vowel with an optional F0 glide.
#[derive(Debug, Clone, Copy)]
pub struct VowelSpec {
    pub f0_start_hz: f64,
    pub f0_end_hz: f64,
    /// (frequency, bandwidth) of the four resonances, ascending.
    pub formants: [(f64, f64); 4],
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Peak amplitude of the rendered signal.
    pub gain: f32,
}

/// Band-limited unit impulses at pitch periods; F0 glides geometrically
/// from start to end frequency. Each pulse is a Hann-windowed sinc
/// centered on its fractional sample position, so non-integer periods
/// stay periodic at their true rate instead of degenerating into an
/// alternating-spacing pattern.
pub fn impulse_train(f0_start: f64, f0_end: f64, duration_s: f64, sample_rate: u32) -> Vec<f32> {
    const TAPS: isize = 16;
    let n = (duration_s * sample_rate as f64).round() as usize;
    let mut out = vec![0.0f32; n];
    let ratio = f0_end / f0_start;
    let mut t = 0.0f64;
    while (t as usize) < n {
        let center = t.round() as isize;
        for j in (center - TAPS).max(0)..=(center + TAPS).min(n as isize - 1) {
            let u = t - j as f64;
            let sinc = if u.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u)
            };
            let taper = 0.5 + 0.5 * (std::f64::consts::PI * u / (TAPS as f64 + 0.5)).cos();
            out[j as usize] += (sinc * taper) as f32;
        }
        let progress = t / n.max(1) as f64;
        let f0 = f0_start * ratio.powf(progress);
        t += sample_rate as f64 / f0;
    }
    out
}

/// Two-pole resonator with unity DC gain.
pub fn resonator(signal: &[f32], frequency_hz: f64, bandwidth_hz: f64, sample_rate: u32) -> Vec<f32> {
    let sr = sample_rate as f64;
    let r = (-std::f64::consts::PI * bandwidth_hz / sr).exp();
    let theta = std::f64::consts::TAU * frequency_hz / sr;
    let a1 = 2.0 * r * theta.cos();
    let a2 = -r * r;
    let g = 1.0 - a1 - a2;
    let mut out = Vec::with_capacity(signal.len());
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    for &x in signal {
        let y = g * x as f64 + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        out.push(y as f32);
    }
    out
}

/// Render a vowel: impulse train through the four-resonator cascade,
/// 10 ms raised-cosine edge fades, peak-normalized to `spec.gain`.
pub fn vowel(spec: &VowelSpec) -> Waveform {
    let mut x = impulse_train(
        spec.f0_start_hz,
        spec.f0_end_hz,
        spec.duration_s,
        spec.sample_rate,
    );
    for &(f, bw) in &spec.formants {
        x = resonator(&x, f, bw, spec.sample_rate);
    }

    let fade = (0.010 * spec.sample_rate as f64) as usize;
    let n = x.len();
    for i in 0..fade.min(n) {
        let w = 0.5 - 0.5 * (std::f64::consts::PI * i as f64 / fade as f64).cos();
        x[i] *= w as f32;
        x[n - 1 - i] *= w as f32;
    }

    let peak = x.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let g = spec.gain / peak;
        for v in &mut x {
            *v *= g;
        }
    }
    Waveform::new(x, spec.sample_rate)
}

/// Uniform white noise in `[-amp, amp]` from a seeded generator.
pub fn white_noise(duration_s: f64, sample_rate: u32, amp: f32, rng: &mut impl Rng) -> Waveform {
    let n = (duration_s * sample_rate as f64).round() as usize;
    Waveform::new(
        (0..n).map(|_| rng.gen_range(-amp..amp)).collect(),
        sample_rate,
    )
}

/// Plain sine tone.
pub fn sine(freq_hz: f64, amp: f32, duration_s: f64, sample_rate: u32) -> Waveform {
    let n = (duration_s * sample_rate as f64).round() as usize;
    Waveform::new(
        (0..n)
            .map(|i| {
                amp * (std::f64::consts::TAU * freq_hz * i as f64 / sample_rate as f64).sin() as f32
            })
            .collect(),
        sample_rate,
    )
}

/// Draw a vowel with formants and pitch in typical speech ranges. Formant
/// draws keep a margin between neighbors so the ordering stays clean.
pub fn random_vowel(rng: &mut impl Rng, sample_rate: u32) -> VowelSpec {
    let f1: f64 = rng.gen_range(300.0..850.0);
    let f2: f64 = rng.gen_range((f1 + 400.0).max(950.0)..2300.0);
    let f3: f64 = rng.gen_range((f2 + 350.0).max(2400.0)..3100.0);
    let f4: f64 = rng.gen_range((f3 + 350.0).max(3250.0)..4300.0);
    // the glide sweeps the harmonic comb across the spectral envelope, so
    // median formant estimates are not biased toward a fixed harmonic
    let f0: f64 = rng.gen_range(90.0..205.0);
    let glide: f64 = rng.gen_range(1.10..1.18) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let glide = if glide < 0.0 { -1.0 / glide } else { glide };
    VowelSpec {
        f0_start_hz: f0,
        f0_end_hz: f0 * glide,
        formants: [
            (f1, rng.gen_range(60.0..110.0)),
            (f2, rng.gen_range(80.0..150.0)),
            (f3, rng.gen_range(100.0..200.0)),
            (f4, rng.gen_range(120.0..250.0)),
        ],
        duration_s: rng.gen_range(0.7..1.2),
        sample_rate,
        gain: rng.gen_range(0.15..0.5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn impulse_train_period_is_right() {
        let x = impulse_train(100.0, 100.0, 1.0, 22_050);
        // each band-limited pulse has unit mass
        let mass: f32 = x.iter().sum();
        assert!((mass - 100.0).abs() <= 1.5, "total mass {mass}");
        // pulse peaks sit one period apart
        let peaks: Vec<usize> = (1..x.len() - 1)
            .filter(|&i| x[i] > 0.6 && x[i] > x[i - 1] && x[i] >= x[i + 1])
            .collect();
        assert!((peaks.len() as i64 - 100).abs() <= 2, "{} peaks", peaks.len());
        for pair in peaks.windows(2) {
            let period = (pair[1] - pair[0]) as f64;
            assert!((period - 220.5).abs() <= 1.0, "period {period}");
        }
    }

    #[test]
    fn resonator_rings_at_its_frequency() {
        let mut x = vec![0.0f32; 4096];
        x[0] = 1.0;
        let y = resonator(&x, 1000.0, 80.0, 22_050);
        // count zero crossings of the impulse response tail
        let crossings = y[..2205]
            .windows(2)
            .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
            .count();
        // 1000 Hz over 0.1 s is about 200 crossings
        assert!((crossings as i64 - 200).abs() <= 10, "{crossings} crossings");
    }

    #[test]
    fn vowel_respects_gain_and_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let spec = random_vowel(&mut rng, 22_050);
            let [f1, f2, f3, f4] = spec.formants;
            assert!(f1.0 < f2.0 && f2.0 < f3.0 && f3.0 < f4.0);
            let w = vowel(&spec);
            let peak = w.samples.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
            assert!((peak - spec.gain).abs() < 1e-3);
        }
    }
}
