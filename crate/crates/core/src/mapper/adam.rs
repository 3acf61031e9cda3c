//! Adam optimizer with bias correction.

use super::{MapperGrads, MapperModel};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: first/second moment estimates per tensor plus the
/// update counter used for bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub hyper: AdamHyper,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(hyper: AdamHyper, model: &MapperModel) -> Self {
        let mut m = Vec::new();
        model.visit_tensors(|t| m.push(vec![0.0f32; t.len()]));
        let v = m.clone();
        Adam {
            hyper,
            step: 0,
            m,
            v,
        }
    }

    /// One update over all model tensors.
    pub fn step(&mut self, model: &mut MapperModel, grads: &MapperGrads) {
        self.step += 1;
        let correction1 = 1.0 - self.hyper.beta1.powi(self.step as i32);
        let correction2 = 1.0 - self.hyper.beta2.powi(self.step as i32);

        let mut grad_tensors = Vec::new();
        grads.visit_tensors(|g| grad_tensors.push(g.to_vec()));

        let mut idx = 0;
        let (m, v, hyper) = (&mut self.m, &mut self.v, self.hyper);
        model.visit_tensors_mut(|w| {
            Self::update_tensor(
                w,
                &grad_tensors[idx],
                &mut m[idx],
                &mut v[idx],
                hyper,
                correction1,
                correction2,
            );
            idx += 1;
        });
    }

    /// Core elementwise update, usable on any flat tensor.
    pub fn update_tensor(
        w: &mut [f32],
        g: &[f32],
        m: &mut [f32],
        v: &mut [f32],
        hyper: AdamHyper,
        correction1: f64,
        correction2: f64,
    ) {
        let b1 = hyper.beta1 as f32;
        let b2 = hyper.beta2 as f32;
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] as f64 / correction1;
            let v_hat = v[i] as f64 / correction2;
            w[i] -= (hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon)) as f32;
        }
    }
}
