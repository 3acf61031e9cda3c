//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neuform_core::audio::Waveform;
use neuform_core::mapper::{train, Dataset, MapperConfig, TrainConfig, TrainOutcome};
use neuform_core::params::{analyze, Analysis, AnalysisConfig};
use neuform_core::stim::{random_vowel, vowel, VowelSpec};

pub const SR: u32 = 22_050;

/// Levinson-Durbin recursion on the biased autocorrelation estimate.
/// The independent oracle for Burg's method: both converge to the true
/// AR model on long stationary signals.
pub fn levinson_lpc(signal: &[f64], order: usize) -> Vec<f64> {
    let n = signal.len();
    let mut r = vec![0.0f64; order + 1];
    for (lag, slot) in r.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += signal[i] * signal[i + lag];
        }
        *slot = acc / n as f64;
    }

    let mut a = vec![0.0f64; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for m in 1..=order {
        let mut acc = r[m];
        for k in 1..m {
            acc += a[k] * r[m - k];
        }
        let k_m = -acc / err;
        let prev = a.clone();
        for i in 1..m {
            a[i] = prev[i] + k_m * prev[m - i];
        }
        a[m] = k_m;
        err *= 1.0 - k_m * k_m;
    }
    a[1..].to_vec()
}

/// Power spectrum of an all-pole model `1/A(z)` in dB at `n_points`
/// uniformly spaced frequencies up to Nyquist.
pub fn lpc_envelope_db(coefficients: &[f64], n_points: usize) -> Vec<f64> {
    (0..n_points)
        .map(|i| {
            let omega = std::f64::consts::PI * i as f64 / n_points as f64;
            let mut re = 1.0;
            let mut im = 0.0;
            for (k, &c) in coefficients.iter().enumerate() {
                let phase = omega * (k + 1) as f64;
                re += c * phase.cos();
                im -= c * phase.sin();
            }
            -10.0 * (re * re + im * im).log10()
        })
        .collect()
}

/// A synthetic AR process driven by seeded uniform noise.
pub fn ar_process(coefficients: &[f64], n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = coefficients.len();
    let mut x = vec![0.0f64; n];
    for i in 0..n {
        let mut v: f64 = rng.gen_range(-1.0..1.0);
        for (k, &c) in coefficients.iter().enumerate() {
            if i > k {
                v -= c * x[i - 1 - k];
            }
        }
        x[i] = v;
    }
    x
}

/// Deterministic corpus of synthetic vowels.
pub fn vowel_corpus(count: usize, seed: u64) -> Vec<(VowelSpec, Waveform)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let spec = random_vowel(&mut rng, SR);
            (spec, vowel(&spec))
        })
        .collect()
}

/// Analyze every waveform of a corpus with the default configuration.
pub fn analyze_corpus(corpus: &[(VowelSpec, Waveform)]) -> Vec<Analysis> {
    let cfg = AnalysisConfig::default();
    corpus
        .iter()
        .map(|(_, w)| analyze(w, &cfg).expect("analysis of synthetic vowel"))
        .collect()
}

/// Train the desk-scale mapper on pre-analyzed utterances.
pub fn train_desk_mapper(
    analyses: &[Analysis],
    max_updates: usize,
    seed: u64,
) -> TrainOutcome {
    let pairs: Vec<_> = analyses.iter().map(|a| (&a.params, &a.mel)).collect();
    let dataset = Dataset::build(&pairs).expect("dataset");
    let config = MapperConfig {
        seed,
        ..Default::default()
    };
    let tcfg = TrainConfig {
        max_updates,
        seed,
        ..Default::default()
    };
    train(&dataset, config, &tcfg, |_, _, _| {}).expect("training")
}
