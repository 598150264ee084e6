//! Adam and the warmup/linear-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::loss::TripletGrad;
use crate::embedding::AdapterParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    t: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &AdapterParams<T>, cfg: AdamConfig) -> Self {
        let n = params.weight.len() + params.bias.len();
        Self {
            cfg,
            t: 0,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update at learning rate `lr`.
    pub fn step(&mut self, params: &mut AdapterParams<T>, grad: &TripletGrad<T>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.cfg.beta1), T::lit(self.cfg.beta2));
        let eps = T::lit(self.cfg.eps);
        let one = T::one();
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let lr = T::lit(lr);
        let values = params.weight.iter_mut().chain(params.bias.iter_mut());
        let grads = grad.dw.iter().chain(&grad.db);
        for (((p, &g), m), v) in values.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Linear warmup from 0 over `warmup_steps`, then linear decay to 0 at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl Schedule {
    /// Learning rate used for 0-based optimizer step `s`.
    pub fn lr(&self, s: usize) -> f64 {
        if s < self.warmup_steps {
            return self.base_lr * (s + 1) as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps {
            return self.base_lr;
        }
        let left = self.total_steps.saturating_sub(s) as f64;
        self.base_lr * left / (self.total_steps - self.warmup_steps) as f64
    }
}
