//! Adam with bias correction and a step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::NumericArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Divisor in the fixed class factor `alpha`.
    pub c: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1500,
            batch_size: 256,
            base_lr: 1.0e-3,
            lr_decay_factor: 0.1,
            lr_decay_every: 300,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            c: 2.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("base_lr", self.base_lr),
            ("lr_decay_every", self.lr_decay_every as f64),
            ("eps_adam", self.eps_adam),
            ("c", self.c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay_factor must be in (0, 1], got {}",
                self.lr_decay_factor
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// `base_lr * decay_factor ^ floor(epoch / decay_every)`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let decays = epoch / config.lr_decay_every.max(1);
    config.base_lr * config.lr_decay_factor.powi(decays as i32)
}

/// First and second moments for each parameter array, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<NumericArray>,
    v: Vec<NumericArray>,
    t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a NumericArray>) -> Self {
        let m: Vec<NumericArray> = params.into_iter().map(|p| NumericArray::zeros(p.shape())).collect();
        Self { v: m.clone(), m, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[NumericArray] {
        &self.m
    }

    pub fn second_moments(&self) -> &[NumericArray] {
        &self.v
    }
}

/// One Adam update of every parameter array in place.
///
/// `params`, `grads` and the state's moments must line up one-to-one with
/// identical shapes; nothing is modified if they do not.
pub fn adam_step(
    params: &mut [&mut NumericArray],
    grads: &[&NumericArray],
    state: &mut AdamState,
    lr: f64,
    hyper: &TrainConfig,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "parameter {i}: {:?} vs gradient {:?} vs moments {:?}",
                    p.shape(),
                    g.shape(),
                    state.m[i].shape()
                ),
            ));
        }
        g.ensure_finite("adam_step")?;
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((theta, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + hyper.eps_adam);
        }
    }
    Ok(())
}
