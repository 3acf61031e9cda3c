use neuform_core::audio::resample;
use neuform_core::formant::{burg_lpc, lpc_roots, pre_emphasis, roots_to_formants};
use neuform_core::stim::{vowel, VowelSpec};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    if v.is_empty() { f64::NAN } else { v[v.len() / 2] }
}

fn run(f1_truth: f64, order: usize, window_ms: f64, use_pe: bool, use_hann: bool) -> f64 {
    let w = vowel(&VowelSpec {
        f0_start_hz: 123.5,
        f0_end_hz: 136.5,
        formants: [(f1_truth, 80.0), (1500.0, 90.0), (2500.0, 120.0), (3400.0, 150.0)],
        duration_s: 1.0,
        sample_rate: 22_050,
        gain: 0.4,
    });
    let target = 10_000u32;
    let d = resample(&w, target);
    let x: Vec<f64> = d.samples.iter().map(|&v| v as f64).collect();
    let x = if use_pe { pre_emphasis(&x, target, 50.0) } else { x };
    let mut wl = (window_ms / 1000.0 * target as f64).round() as usize;
    if wl % 2 == 0 { wl += 1 }
    let win: Vec<f64> = (0..wl)
        .map(|i| {
            if use_hann {
                0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (wl - 1) as f64).cos()
            } else {
                1.0
            }
        })
        .collect();
    let mut f1s = Vec::new();
    let hop = 116; // ~256 at 22050 scaled
    let mut start = 0;
    while start + wl < x.len() {
        let frame: Vec<f64> = x[start..start + wl].iter().zip(&win).map(|(v, w)| v * w).collect();
        if let Some(a) = burg_lpc(&frame, order) {
            if let Ok(roots) = lpc_roots(&a, 0) {
                let c = roots_to_formants(&roots, target, 5000.0, 700.0);
                if !c.is_empty() {
                    f1s.push(c[0].frequency_hz);
                }
            }
        }
        start += hop;
    }
    median(f1s)
}

fn main() {
    for f1 in [300.0, 500.0, 700.0] {
        println!("--- truth F1 {f1}");
        for (order, wms, pe, hann, label) in [
            (10, 25.0, true, true, "baseline o10 25ms pe hann"),
            (10, 25.0, false, true, "no pre-emphasis"),
            (10, 25.0, true, false, "rect window"),
            (10, 50.0, true, true, "50ms window"),
            (12, 25.0, true, true, "order 12"),
            (8, 25.0, true, true, "order 8"),
        ] {
            let est = run(f1, order, wms, pe, hann);
            println!("  {label:28} -> {est:7.1} ({:+6.2}%)", (est - f1) / f1 * 100.0);
        }
    }
}
