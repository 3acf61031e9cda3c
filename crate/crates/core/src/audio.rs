//! WAV file input/output, sample-rate conversion, and silence trimming.
//!
//! Only RIFF/WAVE containers are handled: PCM16 and IEEE float32 input,
//! always PCM16 mono output. Stereo input is averaged down to mono.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The working sample rate of the analysis/synthesis pipeline.
pub const WORKING_RATE: u32 = 22_050;

/// Mono audio carrier. Samples are amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Energy-based voice activity detector settings for [`trim_silence`].
#[derive(Debug, Clone, Copy)]
pub struct VadConfig {
    /// Frames whose RMS falls this many dB below the utterance peak RMS
    /// count as silence. Negative.
    pub energy_threshold_db: f64,
    /// Leading/trailing silent runs shorter than this are kept.
    pub min_silence_ms: f64,
    /// Audio kept on each side of the detected speech region.
    pub margin_ms: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            energy_threshold_db: -40.0,
            min_silence_ms: 100.0,
            margin_ms: 50.0,
        }
    }
}

// ---------------------------------------------------------------------------
// WAV reading
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::MalformedWav {
                offset: self.pos as u64,
                reason: format!("unexpected end of file while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Read a mono or stereo RIFF/WAVE file (PCM16 or float32) as a mono
/// [`Waveform`]. Stereo channels are averaged; PCM16 is scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if cur.take(4, "RIFF tag")? != b"RIFF" {
        return Err(Error::MalformedWav {
            offset: 0,
            reason: "missing RIFF tag".into(),
        });
    }
    cur.u32("RIFF size")?;
    if cur.take(4, "WAVE tag")? != b"WAVE" {
        return Err(Error::MalformedWav {
            offset: 8,
            reason: "missing WAVE tag".into(),
        });
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;

    while cur.pos + 8 <= bytes.len() {
        let id_off = cur.pos as u64;
        let chunk_id: [u8; 4] = cur.take(4, "chunk id")?.try_into().unwrap();
        let chunk_len = cur.u32("chunk size")? as usize;
        let body = cur.take(chunk_len, "chunk body")?;
        // chunks are word-aligned
        if chunk_len % 2 == 1 && cur.pos < bytes.len() {
            cur.pos += 1;
        }
        match &chunk_id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedWav {
                        offset: id_off,
                        reason: format!("fmt chunk too short ({} bytes)", body.len()),
                    });
                }
                let mut fc = Cursor {
                    bytes: body,
                    pos: 0,
                };
                let format_tag = fc.u16("format tag")?;
                let channels = fc.u16("channel count")?;
                let rate = fc.u32("sample rate")?;
                fc.u32("byte rate")?;
                fc.u16("block align")?;
                let bits = fc.u16("bits per sample")?;
                fmt = Some((format_tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
    }

    let (format_tag, channels, rate, bits) = fmt.ok_or_else(|| Error::MalformedWav {
        offset: 12,
        reason: "no fmt chunk".into(),
    })?;
    let data = data.ok_or_else(|| Error::MalformedWav {
        offset: 12,
        reason: "no data chunk".into(),
    })?;
    if channels == 0 || channels > 2 {
        return Err(Error::UnsupportedChannelCount { channels });
    }
    if rate == 0 {
        return Err(Error::MalformedWav {
            offset: 12,
            reason: "sample rate is zero".into(),
        });
    }

    let interleaved: Vec<f32> = match (format_tag, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        (format_tag, bits_per_sample) => {
            return Err(Error::UnsupportedWavCodec {
                format_tag,
                bits_per_sample,
            })
        }
    };

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|fr| 0.5 * (fr[0] + fr[1]))
            .collect()
    };

    Ok(Waveform::new(samples, rate))
}

/// Write a waveform as mono PCM16. Samples are clamped to `[-1, 1]` before
/// quantization; `read_wav(write_wav(w))` matches `w` within one LSB.
pub fn write_wav(path: impl AsRef<Path>, waveform: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let n = waveform.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);

    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&waveform.sample_rate.to_le_bytes());
    out.extend_from_slice(&(waveform.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());

    for &s in &waveform.samples {
        let clamped = s.clamp(-1.0, 1.0) as f64;
        let q = (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }

    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Zero crossings per side of the windowed-sinc interpolation kernel.
const SINC_ZEROS: usize = 32;
/// Kaiser window shape parameter (~90 dB stopband).
const KAISER_BETA: f64 = 8.6;

fn bessel_i0(x: f64) -> f64 {
    // Power series; converges quickly for the argument range used here.
    let mut term = 1.0;
    let mut sum = 1.0;
    let half_x = x / 2.0;
    for k in 1..40 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}

/// Windowed-sinc (Kaiser) resampling to `target_rate`. Output length is
/// `round(n * target / source)`; equal rates return the input unchanged.
pub fn resample(waveform: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target rate must be positive");
    if target_rate == waveform.sample_rate {
        return waveform.clone();
    }
    let src = &waveform.samples;
    let ratio = target_rate as f64 / waveform.sample_rate as f64;
    let n_out = (src.len() as f64 * ratio).round() as usize;
    if n_out == 0 || src.is_empty() {
        return Waveform::new(Vec::new(), target_rate);
    }

    // Anti-aliasing cutoff at the smaller Nyquist, in input-sample units.
    let fc = 0.5 * ratio.min(1.0);
    let half_width = SINC_ZEROS as f64 / (2.0 * fc);
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let center = j as f64 / ratio;
        let lo = ((center - half_width).ceil() as i64).max(0);
        let hi = ((center + half_width).floor() as i64).min(src.len() as i64 - 1);
        let mut acc = 0.0f64;
        for i in lo..=hi {
            let u = center - i as f64;
            let sinc = if u.abs() < 1e-12 {
                1.0
            } else {
                let a = std::f64::consts::PI * 2.0 * fc * u;
                a.sin() / a
            };
            let w_arg = u / half_width;
            let window = bessel_i0(KAISER_BETA * (1.0 - w_arg * w_arg).max(0.0).sqrt()) / i0_beta;
            acc += src[i as usize] as f64 * 2.0 * fc * sinc * window;
        }
        out.push(acc as f32);
    }
    Waveform::new(out, target_rate)
}

// ---------------------------------------------------------------------------
// Silence trimming
// ---------------------------------------------------------------------------

const VAD_WIN_MS: f64 = 20.0;
const VAD_HOP_MS: f64 = 10.0;

/// Trim leading and trailing silence. The result is always a contiguous
/// slice of the input; an all-silent input yields an empty waveform.
pub fn trim_silence(waveform: &Waveform, cfg: &VadConfig) -> Waveform {
    assert!(!waveform.is_empty(), "trim_silence needs a non-empty input");
    let sr = waveform.sample_rate as f64;
    let win = ((VAD_WIN_MS / 1000.0 * sr).round() as usize).max(1);
    let hop = ((VAD_HOP_MS / 1000.0 * sr).round() as usize).max(1);
    let x = &waveform.samples;

    let n_frames = if x.len() >= win {
        1 + (x.len() - win) / hop
    } else {
        1
    };
    let mut rms = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * hop;
        let end = (start + win).min(x.len());
        let mut acc = 0.0f64;
        for &s in &x[start..end] {
            acc += s as f64 * s as f64;
        }
        rms.push((acc / (end - start) as f64).sqrt());
    }

    let peak = rms.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Waveform::new(Vec::new(), waveform.sample_rate);
    }
    let threshold = peak * 10f64.powf(cfg.energy_threshold_db / 20.0);

    let first_active = rms.iter().position(|&r| r >= threshold);
    let last_active = rms.iter().rposition(|&r| r >= threshold);
    let (first_active, last_active) = match (first_active, last_active) {
        (Some(a), Some(b)) => (a, b),
        _ => return Waveform::new(Vec::new(), waveform.sample_rate),
    };

    let margin = (cfg.margin_ms / 1000.0 * sr).round() as usize;
    let min_silence = (cfg.min_silence_ms / 1000.0 * sr).round() as usize;

    let speech_start = first_active * hop;
    let mut start = 0;
    if speech_start >= min_silence {
        start = speech_start.saturating_sub(margin);
    }

    let speech_end = (last_active * hop + win).min(x.len());
    let mut end = x.len();
    if x.len() - speech_end >= min_silence {
        end = (speech_end + margin).min(x.len());
    }

    Waveform::new(x[start..end].to_vec(), waveform.sample_rate)
}
