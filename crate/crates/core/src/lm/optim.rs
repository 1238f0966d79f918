//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::model::{Grads, Model};
use super::tensor::{Mat, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Optimizer state for the trainable tensors of one model.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW { config, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update:
    /// `p ← p − lr·wd·p − lr · m̂ / (√v̂ + eps)` with bias-corrected moments.
    pub fn step<T: Scalar>(&mut self, model: &mut Model<T>, grads: &Grads<T>) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Numeric("non-finite gradient passed to optimizer".into()));
        }
        self.step += 1;
        let c = self.config.clone();
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (m_state, v_state) = (&mut self.m, &mut self.v);
        model.for_each_trainable(grads, |i, p: &mut Mat<T>, g: &Mat<T>| {
            if m_state.len() <= i {
                m_state.resize(i + 1, Vec::new());
                v_state.resize(i + 1, Vec::new());
            }
            let m = &mut m_state[i];
            let v = &mut v_state[i];
            if m.len() != p.data.len() {
                *m = vec![0.0; p.data.len()];
                *v = vec![0.0; p.data.len()];
            }
            for j in 0..p.data.len() {
                let gj = g.data[j].as_f64();
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                let mut w = p.data[j].as_f64();
                w -= c.lr * c.weight_decay * w;
                w -= c.lr * mhat / (vhat.sqrt() + c.eps);
                p.data[j] = T::lit(w);
            }
        });
        if !model.all_finite() {
            return Err(Error::Numeric("parameters became non-finite".into()));
        }
        Ok(())
    }
}

/// Rescale `grads` so their global L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm<T: Scalar>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(T::lit(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::model::{ModelConfig, Params};

    fn tiny() -> Model<f64> {
        let cfg = ModelConfig { vocab_size: 5, d_model: 4, n_layers: 1, n_heads: 1, d_ff: 4, max_seq_len: 4, seed: 9 };
        Model::new(Params::init(&cfg).unwrap())
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut m = tiny();
        let before = m.clone();
        let g = m.zero_grads();
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() });
        opt.step(&mut m, &g).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn decay_only_shrinks_by_lr_times_wd() {
        let mut m = tiny();
        let before = m.clone();
        let g = m.zero_grads();
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() });
        opt.step(&mut m, &g).unwrap();
        for (a, b) in m.params.tensors.iter().zip(&before.params.tensors) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((x - y * (1.0 - 0.05)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // Single coordinate, g = 0.5, w = 1.0, lr = 0.01, wd = 0.1.
        // m = 0.05, v = 0.00025, m̂ = 0.5, v̂ = 0.25
        // w' = 1.0 - 0.01*0.1*1.0 - 0.01 * 0.5 / (0.5 + 1e-8)
        let mut m = tiny();
        let idx = 0;
        m.params.tensors[idx].data[0] = 1.0;
        let mut g = m.zero_grads();
        g.base.as_mut().unwrap()[idx].data[0] = 0.5;
        let mut opt = AdamW::new(AdamWConfig { lr: 0.01, weight_decay: 0.1, ..Default::default() });
        opt.step(&mut m, &g).unwrap();
        let want = 1.0 - 0.001 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((m.params.tensors[idx].data[0] - want).abs() < 1e-15);

        // Second step with the same gradient:
        // m = 0.9*0.05 + 0.1*0.5 = 0.095, v = 0.999*0.00025 + 0.001*0.25 = 0.00049975
        // m̂ = 0.095 / 0.19 = 0.5, v̂ = 0.00049975 / 0.001999 = 0.25
        let w1 = m.params.tensors[idx].data[0];
        opt.step(&mut m, &g).unwrap();
        let mhat: f64 = 0.095 / (1.0 - 0.81);
        let vhat: f64 = 0.000_499_75 / (1.0 - 0.998_001);
        let want2 = w1 - 0.01 * 0.1 * w1 - 0.01 * mhat / (vhat.sqrt() + 1e-8);
        assert!((m.params.tensors[idx].data[0] - want2).abs() < 1e-13);
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut m = tiny();
        let mut g = m.zero_grads();
        g.base.as_mut().unwrap()[0].data[0] = f64::NAN;
        let mut opt = AdamW::new(AdamWConfig::default());
        assert!(matches!(opt.step(&mut m, &g), Err(Error::Numeric(_))));
    }

    #[test]
    fn clipping_bounds_norm() {
        let m = tiny();
        let mut g = m.zero_grads();
        g.base.as_mut().unwrap()[0].data[0] = 3.0;
        g.base.as_mut().unwrap()[0].data[1] = 4.0;
        let pre = clip_grad_norm(&mut g, 1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        assert!((g.norm() - 1.0).abs() < 1e-12);
    }
}
