//! Adam optimizer over a list of parameter tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment buffers aligned one-to-one with the parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    beta1_pow: f64,
    beta2_pow: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            cfg,
            step: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update; `grads` are zeroed afterward.
    ///
    /// `params` and `grads` must match the sizes the state was built with;
    /// a missing or mis-sized gradient is a contract error.
    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &mut [Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(alloc::format!(
                "adam_step: expected {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for i in 0..params.len() {
            if params[i].len() != self.m[i].len() || grads[i].len() != self.m[i].len() {
                return Err(Error::Contract(alloc::format!(
                    "adam_step: tensor {i} size mismatch (param {}, grad {}, state {})",
                    params[i].len(),
                    grads[i].len(),
                    self.m[i].len()
                )));
            }
        }
        self.step += 1;
        self.beta1_pow *= self.cfg.beta1;
        self.beta2_pow *= self.cfg.beta2;
        let bc1 = 1.0 - self.beta1_pow;
        let bc2 = 1.0 - self.beta2_pow;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.cfg;
        for i in 0..params.len() {
            let (p, g) = (&mut params[i], &mut grads[i]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= learning_rate * m_hat / (math::sqrt(v_hat) + epsilon);
                g[j] = 0.0;
            }
        }
        Ok(())
    }
}
