//! The feature-mapping network: a non-causal WaveNet-style stack of gated
//! dilated convolutions from the 9 parameter channels to 80 log-mel
//! channels, with exact reverse-mode gradients and an Adam trainer.
//!
//! Everything runs in f32 on the CPU; loss accumulation uses f64.

mod adam;
mod checkpoint;
mod train;

pub use adam::{Adam, AdamHyper};
pub use train::{moving_average, train, Dataset, TrainConfig, TrainOutcome};

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{denormalize_mel, normalize, NormStats, SpeechParams};
use crate::spectral::MelSpectrogram;

/// Network architecture settings. The paper-scale network uses 1024
/// channels; the desk-scale default of 64 keeps tests laptop-sized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapperConfig {
    pub in_channels: usize,
    pub mel_channels: usize,
    pub residual_channels: usize,
    pub skip_channels: usize,
    pub post_channels: usize,
    pub kernel_width: usize,
    pub dilations: Vec<usize>,
    pub seed: u64,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            in_channels: 9,
            mel_channels: 80,
            residual_channels: 64,
            skip_channels: 64,
            post_channels: 64,
            kernel_width: 3,
            dilations: vec![1, 2, 4, 1, 2, 4],
            seed: 0,
        }
    }
}

impl MapperConfig {
    /// The paper-scale configuration (1024 residual/skip/post channels).
    pub fn paper_scale() -> Self {
        MapperConfig {
            residual_channels: 1024,
            skip_channels: 1024,
            post_channels: 1024,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_width % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "kernel width {} must be odd",
                self.kernel_width
            )));
        }
        if self.dilations.is_empty() {
            return Err(Error::InvalidConfig("dilation list is empty".into()));
        }
        let channels = [
            self.in_channels,
            self.mel_channels,
            self.residual_channels,
            self.skip_channels,
            self.post_channels,
        ];
        if channels.iter().any(|&c| c == 0) || self.dilations.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig(
                "channel counts and dilations must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Frames on each side of an output frame that can influence it:
    /// `(kernel_width - 1) / 2 * sum(dilations)`.
    pub fn receptive_half_width(&self) -> usize {
        (self.kernel_width - 1) / 2 * self.dilations.iter().sum::<usize>()
    }
}

// ---------------------------------------------------------------------------
// 1-D convolution
// ---------------------------------------------------------------------------

/// A dilated 1-D convolution with symmetric zero padding (output length
/// equals input length). Activations are laid out `(channels, frames)`.
#[derive(Debug, Clone)]
pub(crate) struct Conv1d {
    pub w: Array3<f32>, // (c_out, c_in, kernel)
    pub b: Array1<f32>,
    pub dilation: usize,
}

impl Conv1d {
    fn init(c_out: usize, c_in: usize, kernel: usize, dilation: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (c_in * kernel) as f64;
        let fan_out = (c_out * kernel) as f64;
        let bound = (6.0 / (fan_in + fan_out)).sqrt();
        let mut w = Array3::zeros((c_out, c_in, kernel));
        for v in w.iter_mut() {
            *v = rng.gen_range(-bound..bound) as f32;
        }
        Conv1d {
            w,
            b: Array1::zeros(c_out),
            dilation,
        }
    }

    fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        let (c_in, t_len) = x.dim();
        let (c_out, w_in, k) = self.w.dim();
        assert_eq!(c_in, w_in, "conv input channel mismatch");
        let half = (k / 2) as isize;
        let ws = self.w.as_slice().unwrap();
        let mut y = Array2::zeros((c_out, t_len));
        for o in 0..c_out {
            let mut y_row = y.row_mut(o);
            let y_row = y_row.as_slice_mut().unwrap();
            y_row.fill(self.b[o]);
            for i in 0..c_in {
                let x_row = x.row(i);
                let x_row = x_row.as_slice().unwrap();
                for kk in 0..k {
                    let weight = ws[(o * c_in + i) * k + kk];
                    let off = (kk as isize - half) * self.dilation as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = (t_len as isize - off).clamp(0, t_len as isize) as usize;
                    if t0 >= t1 {
                        continue;
                    }
                    let src = &x_row[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                    for (dst, s) in y_row[t0..t1].iter_mut().zip(src) {
                        *dst += weight * s;
                    }
                }
            }
        }
        y
    }

    /// Accumulate weight/bias gradients for upstream gradient `dy` and
    /// return the gradient with respect to the input.
    fn backward(&self, x: &Array2<f32>, dy: &Array2<f32>, grad: &mut ConvGrad) -> Array2<f32> {
        let (c_in, t_len) = x.dim();
        let (c_out, _, k) = self.w.dim();
        let half = (k / 2) as isize;
        let ws = self.w.as_slice().unwrap();
        let gw = grad.w.as_slice_mut().unwrap();
        let mut dx = Array2::zeros((c_in, t_len));

        for o in 0..c_out {
            let dy_row = dy.row(o);
            let dy_row = dy_row.as_slice().unwrap();
            grad.b[o] += dy_row.iter().sum::<f32>();
            for i in 0..c_in {
                let x_row = x.row(i);
                let x_row = x_row.as_slice().unwrap();
                let mut dx_row = dx.row_mut(i);
                let dx_row = dx_row.as_slice_mut().unwrap();
                for kk in 0..k {
                    let off = (kk as isize - half) * self.dilation as isize;
                    let t0 = (-off).max(0) as usize;
                    let t1 = (t_len as isize - off).clamp(0, t_len as isize) as usize;
                    if t0 >= t1 {
                        continue;
                    }
                    let lo = (t0 as isize + off) as usize;
                    let hi = (t1 as isize + off) as usize;
                    // dW[o,i,kk] = sum_t dy[o,t] * x[i,t+off]
                    let mut acc = 0.0f32;
                    for (d, s) in dy_row[t0..t1].iter().zip(&x_row[lo..hi]) {
                        acc += d * s;
                    }
                    gw[(o * c_in + i) * k + kk] += acc;
                    // dx[i,t+off] += w * dy[o,t]
                    let weight = ws[(o * c_in + i) * k + kk];
                    for (d, s) in dx_row[lo..hi].iter_mut().zip(&dy_row[t0..t1]) {
                        *d += weight * s;
                    }
                }
            }
        }
        dx
    }
}

/// Gradient buffer matching one [`Conv1d`].
#[derive(Debug, Clone)]
pub(crate) struct ConvGrad {
    pub w: Array3<f32>,
    pub b: Array1<f32>,
}

impl ConvGrad {
    fn zeros_like(conv: &Conv1d) -> Self {
        ConvGrad {
            w: Array3::zeros(conv.w.dim()),
            b: Array1::zeros(conv.b.dim()),
        }
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Block {
    gate: Conv1d, // residual -> 2*residual, dilated; filter/gate halves
    res: Conv1d,  // gated -> residual, 1x1
    skip: Conv1d, // gated -> skip, 1x1
}

/// Weights, architecture, and the normalization statistics the network was
/// trained with.
#[derive(Debug, Clone)]
pub struct MapperModel {
    pub config: MapperConfig,
    pub stats: NormStats,
    input: Conv1d,
    blocks: Vec<Block>,
    post1: Conv1d,
    post2: Conv1d,
}

impl MapperModel {
    /// Initialize weights uniformly in `+-sqrt(6 / (fan_in + fan_out))`
    /// with zero biases, deterministically from `config.seed`.
    pub fn init(config: MapperConfig, stats: NormStats) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let r = config.residual_channels;
        let k = config.kernel_width;
        let input = Conv1d::init(r, config.in_channels, 1, 1, &mut rng);
        let blocks = config
            .dilations
            .iter()
            .map(|&d| Block {
                gate: Conv1d::init(2 * r, r, k, d, &mut rng),
                res: Conv1d::init(r, r, 1, 1, &mut rng),
                skip: Conv1d::init(config.skip_channels, r, 1, 1, &mut rng),
            })
            .collect();
        let post1 = Conv1d::init(config.post_channels, config.skip_channels, 1, 1, &mut rng);
        let post2 = Conv1d::init(config.mel_channels, config.post_channels, 1, 1, &mut rng);
        Ok(MapperModel {
            config,
            stats,
            input,
            blocks,
            post1,
            post2,
        })
    }

    fn layers(&self) -> Vec<(&'static str, usize, &Conv1d)> {
        let mut out = vec![("input", 0, &self.input)];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push(("gate", i, &b.gate));
            out.push(("res", i, &b.res));
            out.push(("skip", i, &b.skip));
        }
        out.push(("post1", 0, &self.post1));
        out.push(("post2", 0, &self.post2));
        out
    }

    fn layers_mut(&mut self) -> Vec<&mut Conv1d> {
        let mut out = vec![&mut self.input];
        for b in &mut self.blocks {
            out.push(&mut b.gate);
            out.push(&mut b.res);
            out.push(&mut b.skip);
        }
        out.push(&mut self.post1);
        out.push(&mut self.post2);
        out
    }

    /// Tensor names in checkpoint/optimizer order, with shapes.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (kind, idx, conv) in self.layers() {
            let prefix = match kind {
                "input" | "post1" | "post2" => kind.to_string(),
                other => format!("block{idx}.{other}"),
            };
            let (c_out, c_in, k) = conv.w.dim();
            out.push((format!("{prefix}.w"), vec![c_out, c_in, k]));
            out.push((format!("{prefix}.b"), vec![c_out]));
        }
        out
    }

    /// Total trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        self.tensor_specs()
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }

    /// Visit every tensor's flat data in checkpoint order.
    pub fn visit_tensors(&self, mut f: impl FnMut(&[f32])) {
        for (_, _, conv) in self.layers() {
            f(conv.w.as_slice().unwrap());
            f(conv.b.as_slice().unwrap());
        }
    }

    /// Mutable variant of [`visit_tensors`](Self::visit_tensors).
    pub fn visit_tensors_mut(&mut self, mut f: impl FnMut(&mut [f32])) {
        for conv in self.layers_mut() {
            f(conv.w.as_slice_mut().unwrap());
            f(conv.b.as_slice_mut().unwrap());
        }
    }

    /// Map z-scored parameters `(n_frames, in_channels)` to z-scored mel
    /// `(n_frames, mel_channels)`.
    pub fn forward(&self, z_params: &Array2<f32>) -> Array2<f32> {
        let trace = self.forward_traced(&to_channel_major(z_params));
        trace.output.t().as_standard_layout().to_owned()
    }

    fn forward_traced(&self, x: &Array2<f32>) -> Trace {
        assert_eq!(x.nrows(), self.config.in_channels, "input channel count");
        let t_len = x.ncols();
        let mut residual_inputs = Vec::with_capacity(self.blocks.len());
        let mut tanh_f = Vec::with_capacity(self.blocks.len());
        let mut sig_g = Vec::with_capacity(self.blocks.len());
        let mut gated = Vec::with_capacity(self.blocks.len());

        let r = self.config.residual_channels;
        let mut current = self.input.forward(x);
        let mut skip_sum = Array2::<f32>::zeros((self.config.skip_channels, t_len));

        for block in &self.blocks {
            let z = block.gate.forward(&current);
            let mut tf = Array2::<f32>::zeros((r, t_len));
            let mut sg = Array2::<f32>::zeros((r, t_len));
            let mut g = Array2::<f32>::zeros((r, t_len));
            for c in 0..r {
                for t in 0..t_len {
                    let f = z[[c, t]].tanh();
                    let s = 1.0 / (1.0 + (-z[[c + r, t]]).exp());
                    tf[[c, t]] = f;
                    sg[[c, t]] = s;
                    g[[c, t]] = f * s;
                }
            }
            skip_sum += &block.skip.forward(&g);
            let next = &current + &block.res.forward(&g);
            residual_inputs.push(current);
            tanh_f.push(tf);
            sig_g.push(sg);
            gated.push(g);
            current = next;
        }

        let p = skip_sum.mapv(|v| v.max(0.0));
        let q = self.post1.forward(&p);
        let u = q.mapv(|v| v.max(0.0));
        let output = self.post2.forward(&u);

        Trace {
            input: x.clone(),
            residual_inputs,
            tanh_f,
            sig_g,
            gated,
            p,
            u,
            output,
        }
    }

    /// Mean-squared-error gradients over a batch of `(input, target)`
    /// pairs, each `(n_frames, channels)` frame-major. Returns the batch
    /// loss (mean over sequences of the per-sequence MSE).
    pub fn compute_gradients(
        &self,
        batch: &[(Array2<f32>, Array2<f32>)],
        grads: &mut MapperGrads,
    ) -> Result<f64> {
        assert!(!batch.is_empty());
        let inv_batch = 1.0 / batch.len() as f64;
        let mut total = 0.0f64;
        for (input, target) in batch {
            let trace = self.forward_traced(&to_channel_major(input));
            let target = to_channel_major(target);
            total += self.backward(&trace, &target, grads, inv_batch)? * inv_batch;
        }
        Ok(total)
    }

    /// Batch loss without gradients.
    pub fn batch_loss(&self, batch: &[(Array2<f32>, Array2<f32>)]) -> Result<f64> {
        let mut total = 0.0f64;
        for (input, target) in batch {
            let pred = self.forward(input);
            total += mse_loss(&pred, target)?;
        }
        Ok(total / batch.len() as f64)
    }

    fn backward(
        &self,
        trace: &Trace,
        target: &Array2<f32>,
        grads: &mut MapperGrads,
        loss_weight: f64,
    ) -> Result<f64> {
        let (m, t_len) = trace.output.dim();
        if target.dim() != (m, t_len) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", trace.output.dim()),
                got: format!("{:?}", target.dim()),
            });
        }
        let n_entries = (m * t_len) as f64;

        let mut loss = 0.0f64;
        let mut dy = Array2::<f32>::zeros((m, t_len));
        for c in 0..m {
            for t in 0..t_len {
                let diff = trace.output[[c, t]] as f64 - target[[c, t]] as f64;
                loss += diff * diff;
                dy[[c, t]] = (2.0 * diff / n_entries * loss_weight) as f32;
            }
        }
        loss /= n_entries;

        let du = self.post2.backward(&trace.u, &dy, &mut grads.post2);
        let dq = relu_backward(&du, &trace.u);
        let dp = self.post1.backward(&trace.p, &dq, &mut grads.post1);
        let dskip = relu_backward(&dp, &trace.p);

        let r = self.config.residual_channels;
        let mut dres = Array2::<f32>::zeros((r, t_len));
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let g = &trace.gated[i];
            let bg = &mut grads.blocks[i];
            let mut dg = block.skip.backward(g, &dskip, &mut bg.skip);
            dg += &block.res.backward(g, &dres, &mut bg.res);

            let tf = &trace.tanh_f[i];
            let sg = &trace.sig_g[i];
            let mut dz = Array2::<f32>::zeros((2 * r, t_len));
            for c in 0..r {
                for t in 0..t_len {
                    let d = dg[[c, t]];
                    let f = tf[[c, t]];
                    let s = sg[[c, t]];
                    dz[[c, t]] = d * s * (1.0 - f * f);
                    dz[[c + r, t]] = d * f * s * (1.0 - s);
                }
            }
            dres += &block.gate.backward(&trace.residual_inputs[i], &dz, &mut bg.gate);
        }
        self.input.backward(&trace.input, &dres, &mut grads.input);
        Ok(loss)
    }

    /// Analyze-side convenience: z-score the parameters with the stored
    /// statistics, run the network, and de-normalize the mel output.
    pub fn predict_mel(&self, params: &SpeechParams) -> Result<MelSpectrogram> {
        let z = normalize(params, &self.stats);
        let z_mel = self.forward(&z);
        denormalize_mel(&z_mel, &self.stats, params.grid)
    }

    /// Save in the NFCKPT1 format.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        checkpoint::save(self, path.as_ref())
    }

    /// Load an NFCKPT1 checkpoint, validating version, shapes, and checksum.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        checkpoint::load(path.as_ref())
    }
}

struct Trace {
    input: Array2<f32>,
    residual_inputs: Vec<Array2<f32>>,
    tanh_f: Vec<Array2<f32>>,
    sig_g: Vec<Array2<f32>>,
    gated: Vec<Array2<f32>>,
    p: Array2<f32>,
    u: Array2<f32>,
    output: Array2<f32>,
}

fn relu_backward(upstream: &Array2<f32>, activated: &Array2<f32>) -> Array2<f32> {
    let mut out = upstream.clone();
    for (o, &a) in out.iter_mut().zip(activated.iter()) {
        if a <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

fn to_channel_major(frame_major: &Array2<f32>) -> Array2<f32> {
    frame_major.t().as_standard_layout().to_owned()
}

/// Gradient buffers for every tensor of a [`MapperModel`].
#[derive(Debug, Clone)]
pub struct MapperGrads {
    input: ConvGrad,
    blocks: Vec<BlockGrad>,
    post1: ConvGrad,
    post2: ConvGrad,
}

#[derive(Debug, Clone)]
struct BlockGrad {
    gate: ConvGrad,
    res: ConvGrad,
    skip: ConvGrad,
}

impl MapperGrads {
    pub fn zeros_like(model: &MapperModel) -> Self {
        MapperGrads {
            input: ConvGrad::zeros_like(&model.input),
            blocks: model
                .blocks
                .iter()
                .map(|b| BlockGrad {
                    gate: ConvGrad::zeros_like(&b.gate),
                    res: ConvGrad::zeros_like(&b.res),
                    skip: ConvGrad::zeros_like(&b.skip),
                })
                .collect(),
            post1: ConvGrad::zeros_like(&model.post1),
            post2: ConvGrad::zeros_like(&model.post2),
        }
    }

    pub fn zero(&mut self) {
        self.visit_tensors_mut(|t| t.fill(0.0));
    }

    /// Visit every gradient tensor in the same order as
    /// [`MapperModel::visit_tensors`].
    pub fn visit_tensors(&self, mut f: impl FnMut(&[f32])) {
        for grad in self.grad_layers() {
            f(grad.w.as_slice().unwrap());
            f(grad.b.as_slice().unwrap());
        }
    }

    pub fn visit_tensors_mut(&mut self, mut f: impl FnMut(&mut [f32])) {
        for grad in self.grad_layers_mut() {
            f(grad.w.as_slice_mut().unwrap());
            f(grad.b.as_slice_mut().unwrap());
        }
    }

    fn grad_layers(&self) -> Vec<&ConvGrad> {
        let mut out = vec![&self.input];
        for b in &self.blocks {
            out.push(&b.gate);
            out.push(&b.res);
            out.push(&b.skip);
        }
        out.push(&self.post1);
        out.push(&self.post2);
        out
    }

    fn grad_layers_mut(&mut self) -> Vec<&mut ConvGrad> {
        let mut out = vec![&mut self.input];
        for b in &mut self.blocks {
            out.push(&mut b.gate);
            out.push(&mut b.res);
            out.push(&mut b.skip);
        }
        out.push(&mut self.post1);
        out.push(&mut self.post2);
        out
    }
}

/// Mean over all entries of the squared difference, on z-scored mel.
pub fn mse_loss(predicted: &Array2<f32>, target: &Array2<f32>) -> Result<f64> {
    if predicted.dim() != target.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", predicted.dim()),
            got: format!("{:?}", target.dim()),
        });
    }
    let mut acc = 0.0f64;
    for (p, t) in predicted.iter().zip(target.iter()) {
        let d = *p as f64 - *t as f64;
        acc += d * d;
    }
    Ok(acc / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank_stats() -> NormStats {
        NormStats {
            mean: [0.0; 8],
            std: [1.0; 8],
            mel_mean: None,
            mel_std: None,
        }
    }

    fn tiny_config() -> MapperConfig {
        MapperConfig {
            in_channels: 3,
            mel_channels: 5,
            residual_channels: 4,
            skip_channels: 4,
            post_channels: 4,
            kernel_width: 3,
            dilations: vec![1, 2],
            seed: 42,
        }
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic() {
        let a = MapperModel::init(tiny_config(), blank_stats()).unwrap();
        let b = MapperModel::init(tiny_config(), blank_stats()).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        a.visit_tensors(|t| wa.extend_from_slice(t));
        b.visit_tensors(|t| wb.extend_from_slice(t));
        assert_eq!(wa, wb);
    }

    #[test]
    fn biases_start_at_zero() {
        let model = MapperModel::init(tiny_config(), blank_stats()).unwrap();
        let mut tensors = Vec::new();
        model.visit_tensors(|t| tensors.push(t.to_vec()));
        for (i, (name, _)) in model.tensor_specs().iter().enumerate() {
            if name.ends_with(".b") {
                assert!(tensors[i].iter().all(|&v| v == 0.0), "{name} nonzero");
            }
        }
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let cfg = MapperConfig::default();
        let model = MapperModel::init(cfg.clone(), blank_stats()).unwrap();
        let r = cfg.residual_channels;
        let n_blocks = cfg.dilations.len();
        let expected = (cfg.in_channels * r + r)
            + n_blocks * ((r * 2 * r * cfg.kernel_width + 2 * r) + (r * r + r) + (r * cfg.skip_channels + cfg.skip_channels))
            + (cfg.skip_channels * cfg.post_channels + cfg.post_channels)
            + (cfg.post_channels * cfg.mel_channels + cfg.mel_channels);
        assert_eq!(model.parameter_count(), expected);
    }

    #[test]
    fn output_length_matches_input_length() {
        let model = MapperModel::init(tiny_config(), blank_stats()).unwrap();
        for t in [1usize, 2, 7, 46] {
            let x = random_matrix(t, 3, t as u64);
            let y = model.forward(&x);
            assert_eq!(y.dim(), (t, 5));
            assert!(y.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model = MapperModel::init(tiny_config(), blank_stats()).unwrap();
        let x = random_matrix(20, 3, 9);
        assert_eq!(model.forward(&x), model.forward(&x));
    }

    #[test]
    fn receptive_field_locality() {
        let mut cfg = MapperConfig::default();
        cfg.in_channels = 3;
        cfg.mel_channels = 4;
        cfg.residual_channels = 8;
        cfg.skip_channels = 8;
        cfg.post_channels = 8;
        let half = cfg.receptive_half_width();
        assert_eq!(half, 14);

        let model = MapperModel::init(cfg, blank_stats()).unwrap();
        let t_len = 64;
        let x = random_matrix(t_len, 3, 17);
        let base = model.forward(&x);

        let probe = 32;
        let mut bumped = x.clone();
        bumped[[probe, 1]] += 0.5;
        let out = model.forward(&bumped);

        for t in 0..t_len {
            let delta: f32 = (0..4).map(|c| (out[[t, c]] - base[[t, c]]).abs()).sum();
            if t + half < probe || t > probe + half {
                assert!(delta <= 1e-6, "frame {t} changed by {delta}");
            }
        }
        // the perturbed frame itself must change
        let delta: f32 = (0..4).map(|c| (out[[probe, c]] - base[[probe, c]]).abs()).sum();
        assert!(delta > 1e-6);
    }

    #[test]
    fn loss_examples() {
        let a = random_matrix(7, 5, 3);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|v| v + 0.5);
        let loss = mse_loss(&a, &b).unwrap();
        assert!((loss - 0.25).abs() < 1e-6);

        // naive double-loop oracle
        let c = random_matrix(7, 5, 4);
        let mut naive = 0.0f64;
        for i in 0..7 {
            for j in 0..5 {
                let d = a[[i, j]] as f64 - c[[i, j]] as f64;
                naive += d * d;
            }
        }
        naive /= 35.0;
        let fast = mse_loss(&a, &c).unwrap();
        assert!((fast - naive).abs() <= 1e-12 * naive.abs());
    }

    #[test]
    fn loss_rejects_shape_mismatch() {
        let a = random_matrix(7, 5, 3);
        let b = random_matrix(6, 5, 3);
        assert!(matches!(mse_loss(&a, &b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_config();
        cfg.kernel_width = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.dilations.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config();
        cfg.residual_channels = 0;
        assert!(cfg.validate().is_err());
    }
}
