use serde::{Deserialize, Serialize};

use super::params::{Grads, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Parameterized + ?Sized>(params: &P) -> Self {
        let zeros = Grads::zeros_like(params).0;
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    /// One bias-corrected Adam update.
    pub fn step<P: Parameterized + ?Sized>(&mut self, cfg: &AdamConfig, params: &mut P, grads: &Grads) -> Result<()> {
        if grads.0.len() != self.m.len() || grads.0.iter().zip(&self.m).any(|(g, m)| g.len() != m.len()) {
            return Err(Error::Shape("gradient layout does not match optimizer state".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("non-finite gradient".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(&grads.0) {
            for ((mi, vi), gi) in m.iter_mut().zip(v.iter_mut()).zip(g) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            }
        }
        let mut k = 0;
        let (ms, vs) = (&self.m, &self.v);
        params.visit_params_mut(&mut |p| {
            for ((pi, mi), vi) in p.iter_mut().zip(&ms[k]).zip(&vs[k]) {
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                *pi -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            k += 1;
        });
        Ok(())
    }
}
