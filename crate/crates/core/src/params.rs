//! The nine-parameter frame representation: assembly from a waveform,
//! mean/variance normalization, declarative manipulation, and the CSV
//! interchange format.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::formant::{analyze_formant_frames, track_formants, LpcConfig};
use crate::pitch::{auto_voice_preset, estimate_f0, interpolate_unvoiced, F0Config, VoicePreset};
use crate::spectral::{
    frame_energy, frame_signal, mel_filterbank, mel_spectrogram, spectral_centroid, spectral_tilt,
    stft_magnitude, FrameGrid, MelSpectrogram, StftPlan, DEFAULT_F_MAX, DEFAULT_F_MIN,
    DEFAULT_HOP_LENGTH, DEFAULT_N_MELS, DEFAULT_WIN_LENGTH,
};

/// The eight continuous control parameters, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousParam {
    LogF0,
    F1,
    F2,
    F3,
    F4,
    Tilt,
    Centroid,
    Energy,
}

impl ContinuousParam {
    pub const ALL: [ContinuousParam; 8] = [
        ContinuousParam::LogF0,
        ContinuousParam::F1,
        ContinuousParam::F2,
        ContinuousParam::F3,
        ContinuousParam::F4,
        ContinuousParam::Tilt,
        ContinuousParam::Centroid,
        ContinuousParam::Energy,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&p| p == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ContinuousParam::LogF0 => "log_f0",
            ContinuousParam::F1 => "f1",
            ContinuousParam::F2 => "f2",
            ContinuousParam::F3 => "f3",
            ContinuousParam::F4 => "f4",
            ContinuousParam::Tilt => "tilt",
            ContinuousParam::Centroid => "centroid",
            ContinuousParam::Energy => "energy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }

    /// True for parameters manipulated by multiplication (everything but
    /// log F0, which takes an additive shift).
    pub fn is_scalable(self) -> bool {
        self != ContinuousParam::LogF0
    }
}

/// Per-frame speech parameters: one binary voicing flag plus the eight
/// continuous trajectories, all on one shared frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechParams {
    pub vuv: Vec<bool>,
    columns: [Vec<f32>; 8],
    pub grid: FrameGrid,
}

impl SpeechParams {
    pub fn new(vuv: Vec<bool>, columns: [Vec<f32>; 8], grid: FrameGrid) -> Self {
        assert_eq!(vuv.len(), grid.n_frames);
        for c in &columns {
            assert_eq!(c.len(), grid.n_frames);
        }
        SpeechParams { vuv, columns, grid }
    }

    pub fn n_frames(&self) -> usize {
        self.grid.n_frames
    }

    pub fn column(&self, p: ContinuousParam) -> &[f32] {
        &self.columns[p.index()]
    }

    pub fn column_mut(&mut self, p: ContinuousParam) -> &mut [f32] {
        &mut self.columns[p.index()]
    }

    /// Feature matrix for the mapper: `n_frames x 9`, voicing flag first
    /// as raw 0/1, then the continuous columns in CSV order.
    pub fn to_feature_matrix(&self) -> Array2<f32> {
        let n = self.n_frames();
        let mut m = Array2::zeros((n, 9));
        for t in 0..n {
            m[[t, 0]] = if self.vuv[t] { 1.0 } else { 0.0 };
            for p in ContinuousParam::ALL {
                m[[t, 1 + p.index()]] = self.columns[p.index()][t];
            }
        }
        m
    }
}

// ---------------------------------------------------------------------------
// Analysis orchestration
// ---------------------------------------------------------------------------

/// Settings shared by every analysis pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub win_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
    pub n_mels: usize,
    pub mel_f_min: f64,
    pub mel_f_max: f64,
    /// Fixed F0 range; `None` selects a preset automatically.
    pub f0: Option<F0Config>,
    /// Fixed formant ceiling; `None` takes the preset's ceiling.
    pub formant_ceiling_hz: Option<f64>,
    pub formant_max_bandwidth_hz: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            win_length: DEFAULT_WIN_LENGTH,
            hop_length: DEFAULT_HOP_LENGTH,
            sample_rate: 22_050,
            n_mels: DEFAULT_N_MELS,
            mel_f_min: DEFAULT_F_MIN,
            mel_f_max: DEFAULT_F_MAX,
            f0: None,
            formant_ceiling_hz: None,
            formant_max_bandwidth_hz: 700.0,
        }
    }
}

/// Everything one analysis pass produces.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub params: SpeechParams,
    pub mel: MelSpectrogram,
    /// The voice preset that was applied (resolved automatically unless
    /// the config pinned the ranges).
    pub preset: VoicePreset,
}

/// Extract the full nine-parameter representation plus the reference mel
/// spectrogram of a 22.05 kHz mono waveform.
pub fn analyze(waveform: &Waveform, config: &AnalysisConfig) -> Result<Analysis> {
    if waveform.sample_rate != config.sample_rate {
        return Err(Error::SampleRateMismatch {
            got: waveform.sample_rate,
            expected: config.sample_rate,
        });
    }
    let grid = FrameGrid::for_length(
        waveform.len(),
        config.win_length,
        config.hop_length,
        config.sample_rate,
    );

    // spectral features
    let plan = StftPlan::new(config.win_length);
    let frames = frame_signal(waveform, config.win_length, config.hop_length);
    let magnitude = stft_magnitude(&frames, &plan, grid);
    let basis = mel_filterbank(
        config.win_length,
        config.n_mels,
        config.mel_f_min,
        config.mel_f_max,
        config.sample_rate,
    )?;
    let mel = mel_spectrogram(&magnitude, &basis);

    let mut tilt = Vec::with_capacity(grid.n_frames);
    let mut centroid = Vec::with_capacity(grid.n_frames);
    let mut energy = Vec::with_capacity(grid.n_frames);
    for t in 0..grid.n_frames {
        let row = magnitude.values.row(t);
        let row = row.as_slice().unwrap();
        tilt.push(spectral_tilt(row, config.win_length, config.sample_rate) as f32);
        centroid.push(spectral_centroid(row, config.win_length, config.sample_rate) as f32);
        energy.push(frame_energy(frames[t]) as f32);
    }

    // voice preset, pitch, formants
    let mut preset = match config.f0 {
        Some(f0) => {
            let mut p = VoicePreset::low();
            p.f0 = f0;
            p
        }
        None => auto_voice_preset(waveform, &grid)?,
    };
    if let Some(ceiling) = config.formant_ceiling_hz {
        preset.formant_ceiling_hz = ceiling;
    }

    let track = estimate_f0(waveform, &preset.f0, &grid)?;
    let track = interpolate_unvoiced(&track)?;

    let mut lpc = LpcConfig::with_ceiling(preset.formant_ceiling_hz);
    lpc.max_bandwidth_hz = config.formant_max_bandwidth_hz;
    let candidates = analyze_formant_frames(waveform, &grid, &lpc)?;
    let formants = track_formants(&candidates, &grid)?;

    let columns = [
        track.log_f0.clone(),
        formants.tracks[0].clone(),
        formants.tracks[1].clone(),
        formants.tracks[2].clone(),
        formants.tracks[3].clone(),
        tilt,
        centroid,
        energy,
    ];
    let params = SpeechParams::new(track.vuv, columns, grid);
    debug_assert!(params
        .columns
        .iter()
        .all(|c| c.iter().all(|v| v.is_finite())));

    Ok(Analysis { params, mel, preset })
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Pooled per-parameter mean and standard deviation (population convention,
/// std floored at 1e-8), plus optional per-band mel statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 8],
    pub std: [f64; 8],
    #[serde(default)]
    pub mel_mean: Option<Vec<f64>>,
    #[serde(default)]
    pub mel_std: Option<Vec<f64>>,
}

const STD_FLOOR: f64 = 1e-8;

/// Pooled statistics over all frames of all utterances.
pub fn compute_norm_stats(collection: &[&SpeechParams]) -> Result<NormStats> {
    let total: usize = collection.iter().map(|p| p.n_frames()).sum();
    if total == 0 {
        return Err(Error::EmptyCollection);
    }
    let mut mean = [0.0f64; 8];
    let mut std = [0.0f64; 8];
    for p in ContinuousParam::ALL {
        let i = p.index();
        let mut sum = 0.0f64;
        for params in collection {
            for &v in params.column(p) {
                sum += v as f64;
            }
        }
        mean[i] = sum / total as f64;
        let mut sq = 0.0f64;
        for params in collection {
            for &v in params.column(p) {
                let d = v as f64 - mean[i];
                sq += d * d;
            }
        }
        std[i] = (sq / total as f64).sqrt().max(STD_FLOOR);
    }
    Ok(NormStats {
        mean,
        std,
        mel_mean: None,
        mel_std: None,
    })
}

/// Add pooled per-band mel statistics to existing parameter statistics.
pub fn add_mel_stats(stats: &mut NormStats, mels: &[&MelSpectrogram]) -> Result<()> {
    let total: usize = mels.iter().map(|m| m.n_frames()).sum();
    if total == 0 {
        return Err(Error::EmptyCollection);
    }
    let n_mels = mels[0].n_mels();
    let mut mean = vec![0.0f64; n_mels];
    let mut std = vec![0.0f64; n_mels];
    for mel in mels {
        for t in 0..mel.n_frames() {
            for (b, slot) in mean.iter_mut().enumerate() {
                *slot += mel.values[[t, b]] as f64;
            }
        }
    }
    for slot in mean.iter_mut() {
        *slot /= total as f64;
    }
    for mel in mels {
        for t in 0..mel.n_frames() {
            for b in 0..n_mels {
                let d = mel.values[[t, b]] as f64 - mean[b];
                std[b] += d * d;
            }
        }
    }
    for slot in std.iter_mut() {
        *slot = (*slot / total as f64).sqrt().max(STD_FLOOR);
    }
    stats.mel_mean = Some(mean);
    stats.mel_std = Some(std);
    Ok(())
}

/// Z-score the continuous parameters; the voicing flag passes through as
/// raw 0/1. Output is the mapper's `n_frames x 9` input matrix.
pub fn normalize(params: &SpeechParams, stats: &NormStats) -> Array2<f32> {
    let n = params.n_frames();
    let mut m = Array2::zeros((n, 9));
    for t in 0..n {
        m[[t, 0]] = if params.vuv[t] { 1.0 } else { 0.0 };
    }
    for p in ContinuousParam::ALL {
        let i = p.index();
        let col = params.column(p);
        for t in 0..n {
            m[[t, 1 + i]] = ((col[t] as f64 - stats.mean[i]) / stats.std[i]) as f32;
        }
    }
    m
}

/// Inverse of [`normalize`].
pub fn denormalize(z: &Array2<f32>, stats: &NormStats, grid: FrameGrid) -> SpeechParams {
    assert_eq!(z.ncols(), 9, "expected 9 feature columns");
    assert_eq!(z.nrows(), grid.n_frames);
    let n = z.nrows();
    let vuv: Vec<bool> = (0..n).map(|t| z[[t, 0]] > 0.5).collect();
    let columns: [Vec<f32>; 8] = std::array::from_fn(|i| {
        (0..n)
            .map(|t| (z[[t, 1 + i]] as f64 * stats.std[i] + stats.mean[i]) as f32)
            .collect()
    });
    SpeechParams::new(vuv, columns, grid)
}

/// Z-score a mel spectrogram per band with the stored mel statistics.
pub fn normalize_mel(mel: &MelSpectrogram, stats: &NormStats) -> Result<Array2<f32>> {
    let (mean, std) = mel_stats(stats)?;
    let mut m = Array2::zeros((mel.n_frames(), mel.n_mels()));
    for t in 0..mel.n_frames() {
        for b in 0..mel.n_mels() {
            m[[t, b]] = ((mel.values[[t, b]] as f64 - mean[b]) / std[b]) as f32;
        }
    }
    Ok(m)
}

/// Inverse of [`normalize_mel`].
pub fn denormalize_mel(z: &Array2<f32>, stats: &NormStats, grid: FrameGrid) -> Result<MelSpectrogram> {
    let (mean, std) = mel_stats(stats)?;
    let mut values = Array2::zeros((z.nrows(), z.ncols()));
    for t in 0..z.nrows() {
        for b in 0..z.ncols() {
            values[[t, b]] = (z[[t, b]] as f64 * std[b] + mean[b]) as f32;
        }
    }
    Ok(MelSpectrogram { values, grid })
}

fn mel_stats(stats: &NormStats) -> Result<(&[f64], &[f64])> {
    match (&stats.mel_mean, &stats.mel_std) {
        (Some(m), Some(s)) => Ok((m, s)),
        _ => Err(Error::InvalidConfig(
            "norm stats carry no mel statistics".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Manipulation
// ---------------------------------------------------------------------------

/// Declarative per-parameter manipulation: multiplicative factors for the
/// linear-scale parameters, an additive shift for log F0. The voicing flag
/// is immutable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManipulationSpec {
    scales: BTreeMap<ContinuousParam, f64>,
    log_f0_shift: Option<f64>,
}

impl ManipulationSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scale a linear-domain parameter by `factor`.
    pub fn with_scale(mut self, param: ContinuousParam, factor: f64) -> Result<Self> {
        if !param.is_scalable() {
            return Err(Error::InvalidConfig(
                "log_f0 takes an additive shift, not a factor".into(),
            ));
        }
        if !(factor > 0.0) {
            return Err(Error::NonPositiveFactor {
                param: param.name().into(),
                factor,
            });
        }
        if self.scales.insert(param, factor).is_some() {
            return Err(Error::DuplicateManipulation {
                param: param.name().into(),
            });
        }
        Ok(self)
    }

    /// Shift log F0 additively by `shift` (natural log units).
    pub fn with_f0_shift(mut self, shift: f64) -> Result<Self> {
        if self.log_f0_shift.replace(shift).is_some() {
            return Err(Error::DuplicateManipulation {
                param: "log_f0".into(),
            });
        }
        Ok(self)
    }

    /// Shift log F0 so that F0 is multiplied by `alpha`; the user-facing
    /// factor convention.
    pub fn with_f0_scale(self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositiveFactor {
                param: "log_f0".into(),
                factor: alpha,
            });
        }
        self.with_f0_shift(alpha.ln())
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty() && self.log_f0_shift.is_none()
    }

    pub fn scales(&self) -> impl Iterator<Item = (ContinuousParam, f64)> + '_ {
        self.scales.iter().map(|(&p, &f)| (p, f))
    }

    pub fn log_f0_shift(&self) -> Option<f64> {
        self.log_f0_shift
    }

    /// The action on `param`, if any: a factor for scalable parameters,
    /// a shift for log F0.
    pub fn action(&self, param: ContinuousParam) -> Option<f64> {
        if param == ContinuousParam::LogF0 {
            self.log_f0_shift
        } else {
            self.scales.get(&param).copied()
        }
    }
}

/// Apply a manipulation. Targeted trajectories are scaled/shifted
/// elementwise; untouched parameters and the voicing flag are returned
/// bit-for-bit unchanged.
pub fn manipulate(params: &SpeechParams, spec: &ManipulationSpec) -> SpeechParams {
    let mut out = params.clone();
    for (param, factor) in spec.scales() {
        for v in out.column_mut(param) {
            *v *= factor as f32;
        }
    }
    if let Some(shift) = spec.log_f0_shift() {
        for v in out.column_mut(ContinuousParam::LogF0) {
            *v += shift as f32;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Params CSV
// ---------------------------------------------------------------------------

pub const PARAMS_CSV_HEADER: &str = "frame,time_s,vuv,log_f0,f1,f2,f3,f4,tilt,centroid,energy";

/// Format a float with 9 significant digits; round-trips f32 exactly.
pub fn fmt_sig9(value: f64) -> String {
    format!("{value:.8e}")
}

/// Write the per-frame parameter table.
pub fn write_params_csv(path: impl AsRef<Path>, params: &SpeechParams) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    writeln!(buf, "{PARAMS_CSV_HEADER}").unwrap();
    for t in 0..params.n_frames() {
        write!(buf, "{t},{}", fmt_sig9(params.grid.frame_time_s(t))).unwrap();
        write!(buf, ",{}", u8::from(params.vuv[t])).unwrap();
        for p in ContinuousParam::ALL {
            write!(buf, ",{}", fmt_sig9(params.column(p)[t] as f64)).unwrap();
        }
        writeln!(buf).unwrap();
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read a parameter table written by [`write_params_csv`]. The window
/// length and sample rate are not stored in the CSV and must be supplied;
/// the hop length is recovered from the time column.
pub fn read_params_csv(
    path: impl AsRef<Path>,
    win_length: usize,
    sample_rate: u32,
) -> Result<SpeechParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let fail = |line: usize, reason: String| Error::CsvFormat {
        path: path.to_path_buf(),
        line: line + 1,
        reason,
    };

    match lines.next() {
        Some((_, header)) if header.trim() == PARAMS_CSV_HEADER => {}
        Some((i, header)) => return Err(fail(i, format!("unexpected header {header:?}"))),
        None => return Err(fail(0, "empty file".into())),
    }

    let mut vuv = Vec::new();
    let mut columns: [Vec<f32>; 8] = Default::default();
    let mut times = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(fail(i, format!("expected 11 fields, found {}", fields.len())));
        }
        let time: f64 = fields[1]
            .parse()
            .map_err(|_| fail(i, format!("bad time {:?}", fields[1])))?;
        times.push(time);
        match fields[2] {
            "0" => vuv.push(false),
            "1" => vuv.push(true),
            other => return Err(fail(i, format!("bad vuv flag {other:?}"))),
        }
        for (j, col) in columns.iter_mut().enumerate() {
            let v: f32 = fields[3 + j]
                .parse()
                .map_err(|_| fail(i, format!("bad float {:?}", fields[3 + j])))?;
            col.push(v);
        }
    }

    let hop_length = if times.len() >= 2 {
        ((times[1] - times[0]) * sample_rate as f64).round() as usize
    } else {
        DEFAULT_HOP_LENGTH
    };
    let grid = FrameGrid {
        win_length,
        hop_length: hop_length.max(1),
        sample_rate,
        n_frames: vuv.len(),
    };
    Ok(SpeechParams::new(vuv, columns, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> FrameGrid {
        FrameGrid {
            win_length: 1024,
            hop_length: 256,
            sample_rate: 22_050,
            n_frames: n,
        }
    }

    fn tiny_params(f1: &[f32]) -> SpeechParams {
        let n = f1.len();
        let columns = [
            vec![5.0; n],
            f1.to_vec(),
            vec![1500.0; n],
            vec![2500.0; n],
            vec![3500.0; n],
            vec![-0.004; n],
            vec![1200.0; n],
            vec![0.5; n],
        ];
        SpeechParams::new(vec![true; n], columns, grid(n))
    }

    #[test]
    fn two_point_stats() {
        let p = tiny_params(&[400.0, 600.0]);
        let stats = compute_norm_stats(&[&p]).unwrap();
        let i = ContinuousParam::F1.index();
        assert_abs_diff_eq!(stats.mean[i], 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(stats.std[i], 100.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_parameter_hits_std_floor() {
        let p = tiny_params(&[500.0, 500.0, 500.0]);
        let stats = compute_norm_stats(&[&p]).unwrap();
        assert_eq!(stats.std[ContinuousParam::F2.index()], 1e-8);
    }

    #[test]
    fn pooling_is_invariant_under_copies() {
        let p = tiny_params(&[400.0, 600.0, 550.0]);
        let one = compute_norm_stats(&[&p]).unwrap();
        let three = compute_norm_stats(&[&p, &p, &p]).unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(one.mean[i], three.mean[i], epsilon = 1e-12);
            assert_abs_diff_eq!(one.std[i], three.std[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_collection_is_an_error() {
        match compute_norm_stats(&[]) {
            Err(Error::EmptyCollection) => {}
            other => panic!("expected EmptyCollection, got {other:?}"),
        }
    }

    #[test]
    fn z_score_basics_and_roundtrip() {
        let p = tiny_params(&[400.0, 600.0]);
        let stats = compute_norm_stats(&[&p]).unwrap();
        let z = normalize(&p, &stats);
        let i = ContinuousParam::F1.index();
        // x = mean - std and mean + std
        assert_abs_diff_eq!(z[[0, 1 + i]], -1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(z[[1, 1 + i]], 1.0, epsilon = 1e-6);
        // vuv untouched
        assert_eq!(z[[0, 0]], 1.0);

        let back = denormalize(&z, &stats, p.grid);
        for param in ContinuousParam::ALL {
            for (a, b) in p.column(param).iter().zip(back.column(param)) {
                assert!((a - b).abs() <= 1e-6 * a.abs() + 1e-9);
            }
        }
        assert_eq!(back.vuv, p.vuv);
    }

    #[test]
    fn normalize_preserves_order() {
        let p = tiny_params(&[420.0, 610.0, 380.0, 550.0]);
        let stats = compute_norm_stats(&[&p]).unwrap();
        let z = normalize(&p, &stats);
        let i = ContinuousParam::F1.index();
        let raw: Vec<f32> = p.column(ContinuousParam::F1).to_vec();
        let zs: Vec<f32> = (0..4).map(|t| z[[t, 1 + i]]).collect();
        let argsort = |v: &[f32]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            idx
        };
        assert_eq!(argsort(&raw), argsort(&zs));
    }

    #[test]
    fn manipulate_scales_target_only() {
        let p = tiny_params(&[500.0, 510.0]);
        let spec = ManipulationSpec::new()
            .with_scale(ContinuousParam::F1, 1.2)
            .unwrap();
        let out = manipulate(&p, &spec);
        assert_eq!(out.column(ContinuousParam::F1), &[600.0, 612.0]);
        for param in ContinuousParam::ALL {
            if param != ContinuousParam::F1 {
                assert_eq!(out.column(param), p.column(param));
            }
        }
        assert_eq!(out.vuv, p.vuv);
    }

    #[test]
    fn f0_scale_maps_to_log_shift() {
        let p = tiny_params(&[500.0]);
        let spec = ManipulationSpec::new().with_f0_scale(1.1).unwrap();
        let out = manipulate(&p, &spec);
        let before = p.column(ContinuousParam::LogF0)[0] as f64;
        let after = out.column(ContinuousParam::LogF0)[0] as f64;
        assert_abs_diff_eq!(after.exp() / before.exp(), 1.1, epsilon = 1e-5);
    }

    #[test]
    fn manipulation_composes_multiplicatively() {
        let p = tiny_params(&[480.0, 515.0, 333.0]);
        let once = |f: f64, input: &SpeechParams| {
            manipulate(
                input,
                &ManipulationSpec::new()
                    .with_scale(ContinuousParam::F2, f)
                    .unwrap(),
            )
        };
        let chained = once(1.2, &once(0.8, &p));
        let direct = once(0.8 * 1.2, &p);
        for (a, b) in chained
            .column(ContinuousParam::F2)
            .iter()
            .zip(direct.column(ContinuousParam::F2))
        {
            assert!((a - b).abs() <= 1e-9 * a.abs());
        }
    }

    #[test]
    fn empty_spec_is_bitwise_identity() {
        let p = tiny_params(&[480.0, 515.0]);
        let out = manipulate(&p, &ManipulationSpec::new());
        assert_eq!(out, p);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(matches!(
            ManipulationSpec::new().with_scale(ContinuousParam::F1, 0.0),
            Err(Error::NonPositiveFactor { .. })
        ));
        assert!(matches!(
            ManipulationSpec::new().with_scale(ContinuousParam::LogF0, 1.1),
            Err(Error::InvalidConfig(_))
        ));
        let dup = ManipulationSpec::new()
            .with_scale(ContinuousParam::F1, 1.1)
            .unwrap()
            .with_scale(ContinuousParam::F1, 1.2);
        assert!(matches!(dup, Err(Error::DuplicateManipulation { .. })));
    }

    #[test]
    fn params_csv_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut p = tiny_params(&[432.1, 567.8, 499.9]);
        p.vuv[1] = false;
        p.column_mut(ContinuousParam::Tilt)[2] = -0.00612345;
        write_params_csv(&path, &p).unwrap();
        let back = read_params_csv(&path, 1024, 22_050).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn params_csv_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(
            read_params_csv(&path, 1024, 22_050),
            Err(Error::CsvFormat { .. })
        ));
    }
}
