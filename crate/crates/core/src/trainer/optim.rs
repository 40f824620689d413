//! Adam and the const + linear-decay learning-rate schedule.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// The usual GAN setting: β = (0.5, 0.999).
    pub fn gan(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig::gan(2e-4)
    }
}

#[derive(Debug)]
pub struct Adam {
    vars: Vec<Var>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    cfg: AdamConfig,
}

impl Adam {
    pub fn new(vars: Vec<Var>, cfg: AdamConfig) -> Self {
        let m = vars.iter().map(|v| v.zeros_like().expect("zeros")).collect::<Vec<_>>();
        let v = m.clone();
        Adam { vars, m, v, t: 0, cfg }
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Updates every var that has a gradient in `grads`; the others are left
    /// untouched (moments included).
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, var) in self.vars.iter().enumerate() {
            let Some(g) = grads.get(var) else { continue };
            let m = ((&self.m[i] * c.beta1)? + (g * (1.0 - c.beta1))?)?;
            let v = ((&self.v[i] * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?;
            let denom = ((&v / bc2)?.sqrt()? + c.eps)?;
            let update = ((&m / bc1)? / denom)?;
            var.set(&(var.as_tensor() - (update * c.lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }
}

/// Constant for `constant` epochs, then linear decay to zero over `decay`
/// epochs. `epoch` is 0-based.
pub fn lr_at(base: f64, epoch: usize, constant: usize, decay: usize) -> f64 {
    let over = (epoch + 1).saturating_sub(constant) as f64;
    base * (1.0 - over / (decay as f64 + 1.0)).max(0.0)
}

/// Step decay: multiply by `factor` every `every` epochs.
pub fn step_decay(base: f64, epoch: usize, every: usize, factor: f64) -> f64 {
    if every == 0 {
        return base;
    }
    base * factor.powi((epoch / every) as i32)
}
