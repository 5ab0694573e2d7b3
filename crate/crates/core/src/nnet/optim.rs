use serde::{Deserialize, Serialize};

use super::tensor::{Grads, ParamSet};

/// Learning rate falling linearly from `initial` at step 0 to zero at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDecay {
    pub initial: f64,
    pub total_steps: usize,
}

impl LinearDecay {
    pub fn at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.initial;
        }
        let frac = 1.0 - step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.initial * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One bias-corrected step. Parameters are re-quantized to `f32` so
    /// checkpoints round-trip exactly.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, t) in params.tensors.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m.0[k], &mut self.v.0[k], &grads.0[k]);
            for i in 0..t.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let update = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                t.data[i] = (t.data[i] - update) as f32 as f64;
            }
        }
    }
}

/// Rescales `grads` to at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
