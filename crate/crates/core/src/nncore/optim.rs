use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, LossSpec, Targets};
use super::{Dense, Grads, Model};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: Vec<usize>,
    /// Beta(α, α) parameter for MixUp; 0 disables it.
    pub mixup_alpha: f64,
    pub class_weighting: bool,
    pub distill_temperature: f64,
    pub distill_weight: f64,
    /// Stddev of the additive-noise augmentation; 0 disables it.
    pub augment_noise_std: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Short schedule sized for synthetic streams on a laptop.
    pub fn desk() -> Self {
        Self {
            epochs: 60,
            batch_size: 64,
            lr: 0.1,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            lr_decay_epochs: vec![30, 45],
            mixup_alpha: 0.2,
            class_weighting: true,
            distill_temperature: 2.0,
            distill_weight: 1.0,
            augment_noise_std: 0.0,
            rng_seed: 0,
        }
    }

    /// The 170-epoch schedule with decays at 80 and 120, batch 128.
    pub fn paper() -> Self {
        Self {
            epochs: 170,
            batch_size: 128,
            lr_decay_epochs: vec![80, 120],
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if !(self.lr > 0.0) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.mixup_alpha >= 0.0) {
            return bad(format!("mixup_alpha must be >= 0, got {}", self.mixup_alpha));
        }
        if !(self.distill_temperature > 0.0) || !(self.distill_weight >= 0.0) {
            return bad("distill_temperature must be > 0 and distill_weight >= 0".into());
        }
        if !(self.augment_noise_std >= 0.0) {
            return bad("augment_noise_std must be >= 0".into());
        }
        if !(self.lr_decay_factor > 0.0) {
            return bad("lr_decay_factor must be > 0".into());
        }
        let decays = &self.lr_decay_epochs;
        if decays.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("lr_decay_epochs must be strictly increasing: {decays:?}"));
        }
        Ok(())
    }

    /// Step-decayed learning rate for a 0-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }
}

/// SGD with classical momentum: `v ← μv + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Grads,
}

impl Sgd {
    pub fn new(model: &Model, lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: Grads::zeros_like(model),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Grads) -> Result<()> {
        if !self.velocity.matches(model) || !grads.matches(model) {
            return Err(Error::Shape(
                "optimizer state does not match model; rebuild it after growing".into(),
            ));
        }
        let pairs = model
            .layers
            .iter_mut()
            .chain(std::iter::once(&mut model.classifier))
            .zip(self.velocity.layers.iter_mut().chain(std::iter::once(&mut self.velocity.classifier)))
            .zip(grads.layers.iter().chain(std::iter::once(&grads.classifier)));
        for ((param, vel), grad) in pairs {
            update(param, vel, grad, self.lr, self.momentum);
        }
        Ok(())
    }
}

fn update(param: &mut Dense, vel: &mut Dense, grad: &Dense, lr: f64, mu: f64) {
    vel.weights *= mu;
    vel.weights += &grad.weights;
    vel.bias *= mu;
    vel.bias += &grad.bias;
    if lr != 0.0 {
        param.weights.scaled_add(-lr, &vel.weights);
        param.bias.scaled_add(-lr, &vel.bias);
    }
}

/// One optimizer step on `batch`; returns the loss before the update.
pub fn train_step(
    model: &mut Model,
    sgd: &mut Sgd,
    batch: &Array2<f64>,
    targets: Targets<'_>,
    spec: &LossSpec<'_>,
) -> Result<f64> {
    let (loss, grads) = loss_and_grad(model, batch, targets, spec)?;
    if !grads.is_finite() {
        return Err(Error::Numerical(format!("non-finite gradient at loss {loss}")));
    }
    sgd.step(model, &grads)?;
    Ok(loss)
}
