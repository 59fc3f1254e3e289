//! Adam with decoupled weight decay, SGD, and the warmup/linear-decay schedule.

use serde::{Deserialize, Serialize};

use euslm_core::{Error, Result};

use crate::params::{Gradients, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 0.01,
            warmup_steps: 10_000,
            total_steps: 1_000_000,
            batch_size: 256,
            max_grad_norm: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || self.epsilon <= 0.0 || self.max_grad_norm <= 0.0 {
            return Err(Error::Config("weight decay, epsilon and gradient clip must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        LrSchedule::new(self.learning_rate, self.warmup_steps, self.total_steps).map(|_| ())
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.learning_rate, self.warmup_steps, self.total_steps)
    }
}

/// Linear warmup from 0 to `base`, then linear decay to 0 at `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub warmup: usize,
    pub total: usize,
}

impl LrSchedule {
    pub fn new(base: f64, warmup: usize, total: usize) -> Result<Self> {
        if warmup == 0 || warmup >= total {
            return Err(Error::Config(format!("need 0 < warmup < total, got warmup {warmup} total {total}")));
        }
        Ok(LrSchedule { base, warmup, total })
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total {
            return Err(Error::Input(format!("step {step} beyond schedule end {}", self.total)));
        }
        Ok(if step <= self.warmup {
            self.base * (step as f64 / self.warmup as f64)
        } else {
            self.base * ((self.total - step) as f64 / (self.total - self.warmup) as f64)
        })
    }
}

/// Adam moments for one store; decay is applied to parameters flagged `decay`.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamW {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, epsilon: f64, weight_decay: f64) -> Self {
        let zeros = |store: &ParamStore| store.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        AdamW { beta1, beta2, epsilon, weight_decay, step: 0, m: zeros(store), v: zeros(store) }
    }

    pub fn from_config(store: &ParamStore, c: &OptimizerConfig) -> Self {
        AdamW::new(store, c.beta1, c.beta2, c.epsilon, c.weight_decay)
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let decay = if store.param(id).decay { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let w = store.get_mut(id).data_mut();
            match grads.get(id) {
                Some(g) => {
                    for (((w, m), v), g) in w.iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data()) {
                        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                        let step = (*m / bc1) / ((*v / bc2).sqrt() + self.epsilon);
                        *w -= lr * (step + decay * *w);
                    }
                }
                None if decay > 0.0 => w.iter_mut().for_each(|w| *w -= lr * decay * *w),
                None => {}
            }
        }
    }
}

/// Plain gradient descent.
pub fn sgd_update(store: &mut ParamStore, grads: &Gradients, lr: f64) {
    for (id, g) in grads.iter() {
        for (w, g) in store.get_mut(id).data_mut().iter_mut().zip(g.data()) {
            *w -= lr * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LrSchedule::new(1e-4, 10_000, 1_000_000).unwrap();
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.lr_at(10_000).unwrap(), 1e-4);
        assert_eq!(s.lr_at(1_000_000).unwrap(), 0.0);
        assert_eq!(s.lr_at(5_000).unwrap(), 5e-5);
        assert!(s.lr_at(1_000_001).is_err());
        assert!(LrSchedule::new(1e-4, 0, 10).is_err());
        assert!(LrSchedule::new(1e-4, 10, 10).is_err());
    }

    #[test]
    fn schedule_peaks_at_warmup() {
        let s = LrSchedule::new(2.0, 30, 100).unwrap();
        let lrs: Vec<f64> = (0..=100).map(|t| s.lr_at(t).unwrap()).collect();
        let max = lrs.iter().copied().fold(0.0, f64::max);
        assert_eq!(lrs[30], max);
        for w in lrs.windows(3) {
            // piecewise linear: second differences vanish away from the kink
            let d2 = w[2] - 2.0 * w[1] + w[0];
            assert!(d2.abs() < 1e-12 || w[1] == max);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::from_vec(1, 2, vec![1.0, -1.0]), false);
        let mut opt = AdamW::new(&store, 0.9, 0.999, 1e-12, 0.01);
        let mut g = Gradients::new(1);
        g.accumulate(w, &Matrix::from_vec(1, 2, vec![0.5, -3.0]));
        opt.update(&mut store, &g, 0.1);
        let v = store.get(w).data();
        assert!((v[0] - 0.9).abs() < 1e-9 && (v[1] + 0.9).abs() < 1e-9);
    }

    #[test]
    fn decay_skips_flagged_params() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::filled(1, 1, 1.0), true);
        let b = store.add("b", Matrix::filled(1, 1, 1.0), false);
        let mut opt = AdamW::new(&store, 0.9, 0.999, 1e-8, 0.5);
        opt.update(&mut store, &Gradients::new(2), 0.1);
        assert!((store.get(a).to_scalar() - 0.95).abs() < 1e-15);
        assert_eq!(store.get(b).to_scalar(), 1.0);
    }
}
