//! Objective evaluation: copy-synthesis parameter fidelity and
//! manipulation-accuracy sweeps with de-correlation reporting.
//!
//! All errors are computed on z-scored values pooled over frames of the
//! whole test set. F0 and formant errors use only frames voiced in both
//! trajectories; the voicing flag itself is reported as a disagreement
//! rate.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{
    analyze, fmt_sig9, manipulate, Analysis, AnalysisConfig, ContinuousParam, ManipulationSpec,
    NormStats, SpeechParams,
};
use crate::pipeline::DeskPipeline;
use crate::pitch::VoicePreset;

/// Parameters whose error is restricted to mutually voiced frames.
fn voiced_only(param: ContinuousParam) -> bool {
    matches!(
        param,
        ContinuousParam::LogF0
            | ContinuousParam::F1
            | ContinuousParam::F2
            | ContinuousParam::F3
            | ContinuousParam::F4
    )
}

// ---------------------------------------------------------------------------
// Copy-synthesis error
// ---------------------------------------------------------------------------

/// Per-parameter fidelity of one or more reference/test trajectory pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamErrorReport {
    /// Pooled z-scored MSE, keyed by parameter name.
    pub z_mse: BTreeMap<String, f32>,
    /// Pooled median of the per-frame z-scored squared errors.
    pub median_z_se: BTreeMap<String, f32>,
    /// Fraction of frames whose voicing flags disagree.
    pub vuv_disagreement: f32,
    pub frames_total: u64,
    pub frames_voiced_both: u64,
    /// Frames dropped because the two analyses differed in length (at most
    /// two per pair; larger mismatches are errors).
    pub truncated_frames: u64,
}

impl ParamErrorReport {
    pub fn z_mse_of(&self, param: ContinuousParam) -> f32 {
        self.z_mse[param.name()]
    }

    pub fn median_z_se_of(&self, param: ContinuousParam) -> f32 {
        self.median_z_se[param.name()]
    }
}

/// Pools per-frame squared errors across utterance pairs.
#[derive(Debug, Clone, Default)]
pub struct ErrorAccum {
    squared_errors: [Vec<f32>; 8],
    vuv_disagreements: u64,
    frames_total: u64,
    frames_voiced_both: u64,
    truncated_frames: u64,
}

impl ErrorAccum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one reference/test pair. Frame counts may differ by at most
    /// two; the overhang is truncated and counted.
    pub fn add_pair(
        &mut self,
        reference: &SpeechParams,
        test: &SpeechParams,
        stats: &NormStats,
    ) -> Result<()> {
        let (a, b) = (reference.n_frames(), test.n_frames());
        if a.abs_diff(b) > 2 {
            return Err(Error::FrameCountMismatch { left: a, right: b });
        }
        let n = a.min(b);
        self.truncated_frames += (a.max(b) - n) as u64;
        self.frames_total += n as u64;

        let both_voiced: Vec<bool> = (0..n).map(|t| reference.vuv[t] && test.vuv[t]).collect();
        self.frames_voiced_both += both_voiced.iter().filter(|&&v| v).count() as u64;
        self.vuv_disagreements += (0..n).filter(|&t| reference.vuv[t] != test.vuv[t]).count() as u64;

        for param in ContinuousParam::ALL {
            let i = param.index();
            let std = stats.std[i];
            let r = reference.column(param);
            let s = test.column(param);
            let sink = &mut self.squared_errors[i];
            for t in 0..n {
                if voiced_only(param) && !both_voiced[t] {
                    continue;
                }
                let e = (r[t] as f64 - s[t] as f64) / std;
                sink.push((e * e) as f32);
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<ParamErrorReport> {
        if self.frames_total == 0 {
            return Err(Error::EmptyCollection);
        }
        if self.frames_voiced_both == 0 {
            return Err(Error::NoMutuallyVoicedFrames);
        }
        let mut z_mse = BTreeMap::new();
        let mut median_z_se = BTreeMap::new();
        for param in ContinuousParam::ALL {
            let errors = &self.squared_errors[param.index()];
            let mean = errors.iter().map(|&e| e as f64).sum::<f64>() / errors.len() as f64;
            z_mse.insert(param.name().to_string(), mean as f32);
            median_z_se.insert(param.name().to_string(), median(errors));
        }
        Ok(ParamErrorReport {
            z_mse,
            median_z_se,
            vuv_disagreement: (self.vuv_disagreements as f64 / self.frames_total as f64) as f32,
            frames_total: self.frames_total,
            frames_voiced_both: self.frames_voiced_both,
            truncated_frames: self.truncated_frames,
        })
    }
}

fn median(values: &[f32]) -> f32 {
    if values.is_empty() {
        return f32::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Copy-synthesis error of a single pair; see [`ErrorAccum`] for pooling
/// across a test set.
pub fn copy_synthesis_error(
    reference: &SpeechParams,
    resynthesized: &SpeechParams,
    stats: &NormStats,
) -> Result<ParamErrorReport> {
    let mut accum = ErrorAccum::new();
    accum.add_pair(reference, resynthesized, stats)?;
    accum.finish()
}

// ---------------------------------------------------------------------------
// Manipulation sweep
// ---------------------------------------------------------------------------

/// Sweep plan: which parameters to manipulate and by which factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSettings {
    pub factors: Vec<f64>,
    pub params: Vec<ContinuousParam>,
    /// Utterance-level worker threads; 1 keeps everything serial.
    pub jobs: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            factors: vec![0.7, 0.8, 0.9, 1.1, 1.2, 1.3],
            params: ContinuousParam::ALL.to_vec(),
            jobs: 1,
        }
    }
}

/// One (parameter, factor) cell of the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub param: String,
    pub factor: f32,
    /// Re-extracted trajectory against the scaled target.
    pub tracking_z_mse: f32,
    pub tracking_median_z_se: f32,
    /// Every unmanipulated parameter against its reference trajectory.
    pub cross_z_mse: BTreeMap<String, f32>,
    pub frames: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

/// Build the re-analysis settings for audio whose parameter `swept` was
/// scaled by `factor`: the original preset's ranges, widened so the target
/// cannot fall outside them.
pub fn reanalysis_config(
    base: &AnalysisConfig,
    preset: &VoicePreset,
    swept: Option<(ContinuousParam, f64)>,
) -> AnalysisConfig {
    let mut cfg = base.clone();
    let mut f0 = preset.f0;
    let mut ceiling = preset.formant_ceiling_hz;
    if let Some((param, factor)) = swept {
        match param {
            ContinuousParam::LogF0 => {
                f0.f_min *= factor.min(1.0);
                f0.f_max *= factor.max(1.0);
            }
            ContinuousParam::F1 | ContinuousParam::F2 | ContinuousParam::F3 | ContinuousParam::F4 => {
                ceiling *= factor.max(1.0);
                ceiling = ceiling.min(base.sample_rate as f64 / 2.0);
            }
            _ => {}
        }
    }
    cfg.f0 = Some(f0);
    cfg.formant_ceiling_hz = Some(ceiling);
    cfg
}

struct PairErrors {
    tracking_se: Vec<f32>,
    cross_se: BTreeMap<ContinuousParam, Vec<f32>>,
    frames: u64,
}

fn sweep_one_utterance(
    reference: &Analysis,
    param: ContinuousParam,
    factor: f64,
    base_config: &AnalysisConfig,
    stats: &NormStats,
    pipeline: &DeskPipeline,
) -> Result<PairErrors> {
    let spec = if param == ContinuousParam::LogF0 {
        ManipulationSpec::new().with_f0_scale(factor)?
    } else {
        ManipulationSpec::new().with_scale(param, factor)?
    };
    let target = manipulate(&reference.params, &spec);
    let wave = pipeline.render(&target)?;
    let re_cfg = reanalysis_config(base_config, &reference.preset, Some((param, factor)));
    let re = analyze(&wave, &re_cfg)?;

    let n = target.n_frames().min(re.params.n_frames());
    if target.n_frames().abs_diff(re.params.n_frames()) > 2 {
        return Err(Error::FrameCountMismatch {
            left: target.n_frames(),
            right: re.params.n_frames(),
        });
    }
    let both_voiced: Vec<bool> = (0..n)
        .map(|t| target.vuv[t] && re.params.vuv[t])
        .collect();

    let se_of = |want: &SpeechParams, p: ContinuousParam| -> Vec<f32> {
        let std = stats.std[p.index()];
        let w = want.column(p);
        let r = re.params.column(p);
        (0..n)
            .filter(|&t| !voiced_only(p) || both_voiced[t])
            .map(|t| {
                let e = (w[t] as f64 - r[t] as f64) / std;
                (e * e) as f32
            })
            .collect()
    };

    let tracking_se = se_of(&target, param);
    let mut cross_se = BTreeMap::new();
    for other in ContinuousParam::ALL {
        if other != param {
            cross_se.insert(other, se_of(&reference.params, other));
        }
    }
    Ok(PairErrors {
        tracking_se,
        cross_se,
        frames: n as u64,
    })
}

/// Run the full manipulation grid: manipulate, synthesize, re-analyze
/// with widened extractor ranges, and compare the re-extracted trajectory
/// to its target plus every other parameter to its reference. Per-utterance
/// pipeline failures are counted and the sweep continues.
pub fn manipulation_sweep(
    utterances: &[Analysis],
    base_config: &AnalysisConfig,
    stats: &NormStats,
    pipeline: &DeskPipeline,
    settings: &SweepSettings,
) -> Result<SweepReport> {
    if utterances.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut entries = Vec::new();
    for &param in &settings.params {
        for &factor in &settings.factors {
            let run = |reference: &Analysis| {
                sweep_one_utterance(reference, param, factor, base_config, stats, pipeline)
            };
            let results: Vec<Result<PairErrors>> = if settings.jobs > 1 {
                use rayon::prelude::*;
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.jobs)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
                pool.install(|| utterances.par_iter().map(run).collect())
            } else {
                utterances.iter().map(run).collect()
            };

            let mut tracking = Vec::new();
            let mut cross: BTreeMap<ContinuousParam, Vec<f32>> = BTreeMap::new();
            let mut frames = 0u64;
            let mut failures = 0u64;
            for result in results {
                match result {
                    Ok(pair) => {
                        tracking.extend(pair.tracking_se);
                        for (p, se) in pair.cross_se {
                            cross.entry(p).or_default().extend(se);
                        }
                        frames += pair.frames;
                    }
                    Err(_) => failures += 1,
                }
            }
            let mean = |v: &[f32]| {
                if v.is_empty() {
                    f32::NAN
                } else {
                    (v.iter().map(|&e| e as f64).sum::<f64>() / v.len() as f64) as f32
                }
            };
            entries.push(SweepEntry {
                param: param.name().to_string(),
                factor: factor as f32,
                tracking_z_mse: mean(&tracking),
                tracking_median_z_se: median(&tracking),
                cross_z_mse: cross
                    .iter()
                    .map(|(p, se)| (p.name().to_string(), mean(se)))
                    .collect(),
                frames,
                failures,
            });
        }
    }
    Ok(SweepReport { entries })
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }
}

/// Either report kind, for the CLI surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Copy(ParamErrorReport),
    Sweep(SweepReport),
}

/// Write a report as CSV (long format, stable column order) or JSON.
pub fn write_report(report: &Report, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match (report, format) {
        (_, ReportFormat::Json) => {
            let mut b = serde_json::to_vec_pretty(report).expect("report serialization");
            b.push(b'\n');
            b
        }
        (Report::Copy(r), ReportFormat::Csv) => param_report_csv(r),
        (Report::Sweep(r), ReportFormat::Csv) => sweep_report_csv(r),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

const PARAM_REPORT_HEADER: &str = "parameter,metric,value";
const SWEEP_REPORT_HEADER: &str = "swept_param,factor,metric,parameter,value";

fn param_report_csv(report: &ParamErrorReport) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{PARAM_REPORT_HEADER}").unwrap();
    for p in ContinuousParam::ALL {
        let name = p.name();
        writeln!(out, "{name},z_mse,{}", fmt_sig9(report.z_mse[name] as f64)).unwrap();
        writeln!(
            out,
            "{name},median_z_se,{}",
            fmt_sig9(report.median_z_se[name] as f64)
        )
        .unwrap();
    }
    writeln!(
        out,
        "vuv,disagreement,{}",
        fmt_sig9(report.vuv_disagreement as f64)
    )
    .unwrap();
    writeln!(out, "all,frames_total,{}", report.frames_total).unwrap();
    writeln!(out, "all,frames_voiced_both,{}", report.frames_voiced_both).unwrap();
    writeln!(out, "all,truncated_frames,{}", report.truncated_frames).unwrap();
    out
}

fn sweep_report_csv(report: &SweepReport) -> Vec<u8> {
    let mut out = Vec::new();
    writeln!(out, "{SWEEP_REPORT_HEADER}").unwrap();
    for e in &report.entries {
        let (p, f) = (&e.param, fmt_sig9(e.factor as f64));
        writeln!(out, "{p},{f},tracking_z_mse,{p},{}", fmt_sig9(e.tracking_z_mse as f64)).unwrap();
        writeln!(
            out,
            "{p},{f},tracking_median_z_se,{p},{}",
            fmt_sig9(e.tracking_median_z_se as f64)
        )
        .unwrap();
        for (other, value) in &e.cross_z_mse {
            writeln!(out, "{p},{f},cross_z_mse,{other},{}", fmt_sig9(*value as f64)).unwrap();
        }
        writeln!(out, "{p},{f},frames,all,{}", e.frames).unwrap();
        writeln!(out, "{p},{f},failures,all,{}", e.failures).unwrap();
    }
    out
}

/// Parse a copy-synthesis report CSV written by [`write_report`].
pub fn read_param_report_csv(path: impl AsRef<Path>) -> Result<ParamErrorReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fail = |line: usize, reason: String| Error::CsvFormat {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut report = ParamErrorReport {
        z_mse: BTreeMap::new(),
        median_z_se: BTreeMap::new(),
        vuv_disagreement: 0.0,
        frames_total: 0,
        frames_voiced_both: 0,
        truncated_frames: 0,
    };
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != PARAM_REPORT_HEADER {
                return Err(fail(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(fail(i + 1, "expected 3 fields".into()));
        }
        let value = fields[2];
        match (fields[0], fields[1]) {
            ("vuv", "disagreement") => {
                report.vuv_disagreement = value
                    .parse()
                    .map_err(|_| fail(i + 1, format!("bad float {value:?}")))?;
            }
            ("all", key) => {
                let v: u64 = value
                    .parse()
                    .map_err(|_| fail(i + 1, format!("bad count {value:?}")))?;
                match key {
                    "frames_total" => report.frames_total = v,
                    "frames_voiced_both" => report.frames_voiced_both = v,
                    "truncated_frames" => report.truncated_frames = v,
                    other => return Err(fail(i + 1, format!("unknown field {other:?}"))),
                }
            }
            (param, metric) => {
                let v: f32 = value
                    .parse()
                    .map_err(|_| fail(i + 1, format!("bad float {value:?}")))?;
                let map = match metric {
                    "z_mse" => &mut report.z_mse,
                    "median_z_se" => &mut report.median_z_se,
                    other => return Err(fail(i + 1, format!("unknown metric {other:?}"))),
                };
                map.insert(param.to_string(), v);
            }
        }
    }
    Ok(report)
}

/// Parse a sweep report CSV written by [`write_report`].
pub fn read_sweep_report_csv(path: impl AsRef<Path>) -> Result<SweepReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let fail = |line: usize, reason: String| Error::CsvFormat {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut entries: Vec<SweepEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line.trim() != SWEEP_REPORT_HEADER {
                return Err(fail(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(fail(i + 1, "expected 5 fields".into()));
        }
        let param = fields[0].to_string();
        let factor: f32 = fields[1]
            .parse()
            .map_err(|_| fail(i + 1, format!("bad factor {:?}", fields[1])))?;
        let entry = match entries
            .iter_mut()
            .find(|e| e.param == param && e.factor == factor)
        {
            Some(e) => e,
            None => {
                entries.push(SweepEntry {
                    param: param.clone(),
                    factor,
                    tracking_z_mse: f32::NAN,
                    tracking_median_z_se: f32::NAN,
                    cross_z_mse: BTreeMap::new(),
                    frames: 0,
                    failures: 0,
                });
                entries.last_mut().unwrap()
            }
        };
        let value = fields[4];
        match fields[2] {
            "tracking_z_mse" => entry.tracking_z_mse = value.parse().map_err(|_| fail(i + 1, format!("bad float {value:?}")))?,
            "tracking_median_z_se" => entry.tracking_median_z_se = value.parse().map_err(|_| fail(i + 1, format!("bad float {value:?}")))?,
            "cross_z_mse" => {
                let v: f32 = value.parse().map_err(|_| fail(i + 1, format!("bad float {value:?}")))?;
                entry.cross_z_mse.insert(fields[3].to_string(), v);
            }
            "frames" => entry.frames = value.parse().map_err(|_| fail(i + 1, format!("bad count {value:?}")))?,
            "failures" => entry.failures = value.parse().map_err(|_| fail(i + 1, format!("bad count {value:?}")))?,
            other => return Err(fail(i + 1, format!("unknown metric {other:?}"))),
        }
    }
    Ok(SweepReport { entries })
}
