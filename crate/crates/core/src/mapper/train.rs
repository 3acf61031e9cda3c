//! From-scratch trainer: seeded random crops, MSE loss, Adam updates.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, AdamHyper, MapperConfig, MapperGrads, MapperModel};
use crate::error::{Error, Result};
use crate::params::{add_mel_stats, compute_norm_stats, normalize, normalize_mel, NormStats};
use crate::params::SpeechParams;
use crate::spectral::MelSpectrogram;

/// Training recipe. The paper-scale recipe uses batches of 128 over 99k
/// updates; the desk defaults keep a run in the minutes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    pub max_updates: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            seq_len: 46,
            max_updates: 2000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.seq_len == 0
            || self.max_updates == 0
        {
            return Err(Error::InvalidConfig(
                "training settings must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Aligned, z-scored training pairs plus the statistics they were scored
/// with. Statistics come from exactly the utterances passed in, so build
/// the dataset from the training split only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<(Array2<f32>, Array2<f32>)>,
    pub stats: NormStats,
}

impl Dataset {
    pub fn build(pairs: &[(&SpeechParams, &MelSpectrogram)]) -> Result<Dataset> {
        let params: Vec<&SpeechParams> = pairs.iter().map(|(p, _)| *p).collect();
        let mels: Vec<&MelSpectrogram> = pairs.iter().map(|(_, m)| *m).collect();
        let mut stats = compute_norm_stats(&params)?;
        add_mel_stats(&mut stats, &mels)?;

        let mut items = Vec::with_capacity(pairs.len());
        for (p, m) in pairs {
            if p.n_frames() != m.n_frames() {
                return Err(Error::FrameCountMismatch {
                    left: p.n_frames(),
                    right: m.n_frames(),
                });
            }
            items.push((normalize(p, &stats), normalize_mel(m, &stats)?));
        }
        Ok(Dataset { items, stats })
    }
}

/// A finished run: the trained model, the per-update loss curve, and how
/// many utterances were too short to crop from.
pub struct TrainOutcome {
    pub model: MapperModel,
    pub losses: Vec<f32>,
    pub skipped_short: usize,
}

/// Train a freshly initialized model on seeded random crops.
/// `on_update(step, loss, model)` fires after every update; use it for
/// periodic checkpointing.
pub fn train(
    dataset: &Dataset,
    config: MapperConfig,
    tcfg: &TrainConfig,
    mut on_update: impl FnMut(usize, f32, &MapperModel),
) -> Result<TrainOutcome> {
    config.validate()?;
    tcfg.validate()?;

    let usable: Vec<&(Array2<f32>, Array2<f32>)> = dataset
        .items
        .iter()
        .filter(|(p, _)| p.nrows() >= tcfg.seq_len)
        .collect();
    let skipped_short = dataset.items.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::EmptyDataset {
            skipped: skipped_short,
        });
    }

    let mut model = MapperModel::init(config, dataset.stats.clone())?;
    let hyper = AdamHyper {
        learning_rate: tcfg.learning_rate,
        beta1: tcfg.beta1,
        beta2: tcfg.beta2,
        epsilon: tcfg.epsilon,
    };
    let mut adam = Adam::new(hyper, &model);
    let mut grads = MapperGrads::zeros_like(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut losses = Vec::with_capacity(tcfg.max_updates);

    for step in 0..tcfg.max_updates {
        let batch: Vec<(Array2<f32>, Array2<f32>)> = (0..tcfg.batch_size)
            .map(|_| {
                let (params, mel) = usable[rng.gen_range(0..usable.len())];
                let max_start = params.nrows() - tcfg.seq_len;
                let start = if max_start == 0 {
                    0
                } else {
                    rng.gen_range(0..=max_start)
                };
                let crop = |m: &Array2<f32>| {
                    m.slice(ndarray::s![start..start + tcfg.seq_len, ..])
                        .to_owned()
                };
                (crop(params), crop(mel))
            })
            .collect();

        grads.zero();
        let loss = model.compute_gradients(&batch, &mut grads)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        adam.step(&mut model, &grads);
        losses.push(loss as f32);
        on_update(step, loss as f32, &model);
    }

    Ok(TrainOutcome {
        model,
        losses,
        skipped_short,
    })
}

/// Trailing moving average, for smoothed-loss checks and reports.
pub fn moving_average(values: &[f32], window: usize) -> Vec<f32> {
    assert!(window > 0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0f64;
    for i in 0..values.len() {
        acc += values[i] as f64;
        if i >= window {
            acc -= values[i - window] as f64;
        }
        let n = (i + 1).min(window);
        out.push((acc / n as f64) as f32);
    }
    out
}
