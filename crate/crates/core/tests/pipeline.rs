//! Integration checks across modules: full analysis on constructed
//! signals, formant accuracy on known resonators, and the analyze ->
//! invert -> render -> re-analyze loop of the built-in backend.

mod common;

use common::SR;
use neuform_core::audio::Waveform;
use neuform_core::error::Error;
use neuform_core::eval::{copy_synthesis_error, ErrorAccum};
use neuform_core::mapper::{Dataset, MapperConfig, TrainConfig};
use neuform_core::params::{analyze, compute_norm_stats, AnalysisConfig, ContinuousParam};
use neuform_core::pitch::F0Config;
use neuform_core::spectral::mel_filterbank;
use neuform_core::stim::{vowel, VowelSpec};
use neuform_core::vocoder::{griffin_lim, mel_to_linear, GriffinLimConfig};

fn test_vowel(f0: f64, formants: [(f64, f64); 4], dur: f64) -> Waveform {
    // slight glide sweeps the harmonics past the resonances
    vowel(&VowelSpec {
        f0_start_hz: f0 * 0.93,
        f0_end_hz: f0 * 1.07,
        formants,
        duration_s: dur,
        sample_rate: SR,
        gain: 0.4,
    })
}

#[test]
fn analyze_yields_aligned_finite_rows() {
    let w = test_vowel(140.0, [(600.0, 80.0), (1200.0, 90.0), (2500.0, 120.0), (3400.0, 150.0)], 1.0);
    assert_eq!(w.len(), 22_050);
    let analysis = analyze(&w, &AnalysisConfig::default()).unwrap();
    assert_eq!(analysis.params.n_frames(), 83);
    assert_eq!(analysis.mel.n_frames(), 83);
    for p in ContinuousParam::ALL {
        let col = analysis.params.column(p);
        assert_eq!(col.len(), 83);
        assert!(col.iter().all(|v| v.is_finite()), "{} not finite", p.name());
    }
}

#[test]
fn analyze_is_deterministic() {
    let w = test_vowel(120.0, [(500.0, 70.0), (1500.0, 90.0), (2400.0, 130.0), (3600.0, 160.0)], 0.8);
    let cfg = AnalysisConfig::default();
    let a = analyze(&w, &cfg).unwrap();
    let b = analyze(&w, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.mel.values, b.mel.values);
}

#[test]
fn analyze_rejects_silence() {
    let w = Waveform::new(vec![0.0; 22_050], SR);
    match analyze(&w, &AnalysisConfig::default()) {
        Err(Error::NoVoicedFrames) => {}
        other => panic!("expected NoVoicedFrames, got {other:?}"),
    }
}

#[test]
fn analyze_rejects_wrong_rate() {
    let w = Waveform::new(vec![0.1; 16_000], 16_000);
    match analyze(&w, &AnalysisConfig::default()) {
        Err(Error::SampleRateMismatch { .. }) => {}
        other => panic!("expected SampleRateMismatch, got {other:?}"),
    }
}

#[test]
fn known_resonators_are_recovered() {
    let truth = [(600.0, 80.0), (1200.0, 90.0), (2500.0, 120.0), (3400.0, 150.0)];
    let w = test_vowel(130.0, truth, 1.0);
    let analysis = analyze(&w, &AnalysisConfig::default()).unwrap();
    let formant_params = [
        ContinuousParam::F1,
        ContinuousParam::F2,
        ContinuousParam::F3,
        ContinuousParam::F4,
    ];
    for (i, p) in formant_params.iter().enumerate() {
        let mut values: Vec<f32> = analysis.params.column(*p).to_vec();
        values.sort_by(f32::total_cmp);
        let median = values[values.len() / 2] as f64;
        let rel = (median - truth[i].0).abs() / truth[i].0;
        let bound = if i < 3 { 0.05 } else { 0.08 };
        assert!(rel <= bound, "F{} median {median:.1} vs {}", i + 1, truth[i].0);
    }
}

#[test]
fn griffin_lim_roundtrip_preserves_log_f0() {
    // analyze -> mel_to_linear -> griffin_lim -> analyze, no mapper in the
    // loop; log-F0 must survive the mel bottleneck and phase reconstruction
    let corpus = common::vowel_corpus(6, 0xA11CE);
    let cfg = AnalysisConfig::default();
    let basis = mel_filterbank(1024, 80, 0.0, 8000.0, SR).unwrap();

    let analyses: Vec<_> = corpus
        .iter()
        .map(|(_, w)| analyze(w, &cfg).unwrap())
        .collect();
    let params_refs: Vec<_> = analyses.iter().map(|a| &a.params).collect();
    let stats = compute_norm_stats(&params_refs).unwrap();

    let mut accum = ErrorAccum::new();
    for a in &analyses {
        let mag = mel_to_linear(&a.mel, &basis).unwrap();
        let wave = griffin_lim(&mag, &GriffinLimConfig::default()).unwrap();
        let mut re_cfg = cfg.clone();
        re_cfg.f0 = Some(a.preset.f0);
        re_cfg.formant_ceiling_hz = Some(a.preset.formant_ceiling_hz);
        let re = analyze(&wave, &re_cfg).unwrap();
        accum.add_pair(&a.params, &re.params, &stats).unwrap();
    }
    let report = accum.finish().unwrap();
    let median = report.median_z_se_of(ContinuousParam::LogF0);
    assert!(median <= 0.1, "median log-F0 z-SE {median}");
}

#[test]
fn training_on_vowels_reduces_loss() {
    let corpus = common::vowel_corpus(24, 0xBEE);
    let analyses = common::analyze_corpus(&corpus);
    let outcome = common::train_desk_mapper(&analyses, 120, 7);
    assert_eq!(outcome.losses.len(), 120);
    let first = outcome.losses[..10].iter().sum::<f32>() / 10.0;
    let last = outcome.losses[110..].iter().sum::<f32>() / 10.0;
    assert!(last < first, "loss did not decrease: {first} -> {last}");
}

#[test]
fn same_seed_reproduces_loss_curve() {
    let corpus = common::vowel_corpus(8, 0xF00D);
    let analyses = common::analyze_corpus(&corpus);
    let pairs: Vec<_> = analyses.iter().map(|a| (&a.params, &a.mel)).collect();
    let dataset = Dataset::build(&pairs).unwrap();
    let run = || {
        let config = MapperConfig {
            residual_channels: 16,
            skip_channels: 16,
            post_channels: 16,
            seed: 3,
            ..Default::default()
        };
        let tcfg = TrainConfig {
            max_updates: 40,
            batch_size: 4,
            seed: 3,
            ..Default::default()
        };
        neuform_core::mapper::train(&dataset, config, &tcfg, |_, _, _| {})
            .unwrap()
            .losses
            .iter()
            .map(|l| l.to_bits())
            .collect::<Vec<u32>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn reanalysis_ranges_widen_with_the_manipulation() {
    use neuform_core::eval::reanalysis_config;
    use neuform_core::pitch::VoicePreset;

    let cfg = AnalysisConfig::default();
    let preset = VoicePreset::high();

    // F0 sweeps widen the range toward the scaled target
    let up = reanalysis_config(&cfg, &preset, Some((ContinuousParam::LogF0, 1.3)));
    let f0 = up.f0.unwrap();
    assert_eq!(f0.f_min, preset.f0.f_min);
    assert!((f0.f_max - preset.f0.f_max * 1.3).abs() < 1e-9);
    let down = reanalysis_config(&cfg, &preset, Some((ContinuousParam::LogF0, 0.7)));
    let f0 = down.f0.unwrap();
    assert!((f0.f_min - preset.f0.f_min * 0.7).abs() < 1e-9);
    assert_eq!(f0.f_max, preset.f0.f_max);

    // formant sweeps only ever raise the ceiling
    let up = reanalysis_config(&cfg, &preset, Some((ContinuousParam::F2, 1.2)));
    assert!((up.formant_ceiling_hz.unwrap() - 5500.0 * 1.2).abs() < 1e-9);
    let down = reanalysis_config(&cfg, &preset, Some((ContinuousParam::F2, 0.8)));
    assert_eq!(down.formant_ceiling_hz.unwrap(), 5500.0);

    // identity factor reproduces the plain re-analysis settings
    let ident = reanalysis_config(&cfg, &preset, Some((ContinuousParam::F1, 1.0)));
    let plain = reanalysis_config(&cfg, &preset, None);
    assert_eq!(ident.f0.unwrap().f_min, plain.f0.unwrap().f_min);
    assert_eq!(ident.formant_ceiling_hz, plain.formant_ceiling_hz);
}

#[test]
fn copy_synthesis_error_of_identity_is_zero() {
    let w = test_vowel(150.0, [(550.0, 80.0), (1400.0, 90.0), (2450.0, 120.0), (3300.0, 150.0)], 0.7);
    let analysis = analyze(&w, &AnalysisConfig::default()).unwrap();
    let stats = compute_norm_stats(&[&analysis.params]).unwrap();
    let report = copy_synthesis_error(&analysis.params, &analysis.params, &stats).unwrap();
    for p in ContinuousParam::ALL {
        assert_eq!(report.z_mse_of(p), 0.0);
    }
}

#[test]
fn low_and_high_presets_resolve_from_audio() {
    let low = test_vowel(110.0, [(600.0, 80.0), (1200.0, 90.0), (2500.0, 120.0), (3400.0, 150.0)], 0.8);
    let high = test_vowel(230.0, [(700.0, 80.0), (1800.0, 90.0), (2700.0, 120.0), (3600.0, 150.0)], 0.8);
    let cfg = AnalysisConfig::default();
    let a = analyze(&low, &cfg).unwrap();
    let b = analyze(&high, &cfg).unwrap();
    assert_eq!(a.preset.formant_ceiling_hz, 5000.0);
    assert_eq!(b.preset.formant_ceiling_hz, 5500.0);
}

#[test]
fn explicit_f0_config_overrides_preset() {
    let w = test_vowel(140.0, [(600.0, 80.0), (1200.0, 90.0), (2500.0, 120.0), (3400.0, 150.0)], 0.7);
    let mut cfg = AnalysisConfig::default();
    cfg.f0 = Some(F0Config::with_range(80.0, 400.0));
    cfg.formant_ceiling_hz = Some(5200.0);
    let analysis = analyze(&w, &cfg).unwrap();
    assert_eq!(analysis.preset.f0.f_min, 80.0);
    assert_eq!(analysis.preset.formant_ceiling_hz, 5200.0);
}
