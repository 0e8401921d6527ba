use serde::{Deserialize, Serialize};

use super::siren::Dense;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Dense>,
    pub second_moment: Vec<Dense>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &[Dense], learning_rate: f64) -> Self {
        Self {
            first_moment: params.iter().map(Dense::zeros_like).collect(),
            second_moment: params.iter().map(Dense::zeros_like).collect(),
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [Dense], grads: &[Dense]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::dims(format!("{} parameter blocks", self.first_moment.len()), grads.len()));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.weight.rows() != g.weight.rows() || p.weight.cols() != g.weight.cols() || p.bias.len() != g.bias.len() {
                return Err(Error::dims("matching parameter and gradient shapes", "mismatch"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.eps);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            update(p.weight.as_mut_slice(), g.weight.as_slice(), m.weight.as_mut_slice(), v.weight.as_mut_slice());
            update(&mut p.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}
