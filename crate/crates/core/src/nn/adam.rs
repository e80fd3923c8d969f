//! Adam with coupled L2 weight decay and a per-epoch cosine annealing
//! learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::Param;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-5,
        }
    }
}

/// lr(t) = eta_min + (lr_base - eta_min) * (1 + cos(pi t / T)) / 2, stepped
/// once per epoch.
#[derive(Debug, Clone, Copy)]
pub struct CosineSchedule {
    pub lr_base: f32,
    pub eta_min: f32,
    pub total_epochs: usize,
}

impl CosineSchedule {
    pub fn new(lr_base: f32, total_epochs: usize) -> Self {
        CosineSchedule {
            lr_base,
            eta_min: 0.0,
            total_epochs,
        }
    }

    pub fn lr(&self, epoch: usize) -> f32 {
        if self.total_epochs == 0 {
            return self.lr_base;
        }
        let t = epoch.min(self.total_epochs) as f64;
        let total = self.total_epochs as f64;
        let cos = (std::f64::consts::PI * t / total).cos();
        (self.eta_min as f64 + 0.5 * (self.lr_base - self.eta_min) as f64 * (1.0 + cos)) as f32
    }
}

/// First/second moment buffers are keyed by parameter name so the state
/// survives checkpoint round-trips independent of traversal order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step_count: u64,
    pub slots: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            step_count: 0,
            slots: BTreeMap::new(),
        }
    }

    /// One update over every named parameter. Rejects non-finite gradients
    /// before touching any value.
    pub fn step(&mut self, lr: f32, params: &mut [(String, &mut Param)]) -> Result<()> {
        for (name, p) in params.iter() {
            if !p.grad.data().iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for {name}")));
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - (self.cfg.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.cfg.beta2 as f64).powf(t);
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let wd = self.cfg.weight_decay;
        let eps = self.cfg.eps;

        for (name, p) in params.iter_mut() {
            let n = p.value.len();
            let (m, v) = self
                .slots
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                return Err(Error::Dimension(format!(
                    "adam slot for {name} has {} elements, parameter has {n}",
                    m.len()
                )));
            }
            let vals = p.value.data_mut();
            let grads = p.grad.data();
            for i in 0..n {
                let g = grads[i] + wd * vals[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let mhat = m[i] as f64 / bc1;
                let vhat = v[i] as f64 / bc2;
                vals[i] -= (lr as f64 * mhat / (vhat.sqrt() + eps as f64)) as f32;
            }
        }
        Ok(())
    }
}
