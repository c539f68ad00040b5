//! Anti-forgetting strategies sharing one training loop.
//!
//! * `replay`: cross-entropy on task data plus memory exemplars.
//! * `icarl`: replay plus logit distillation against a frozen copy of the
//!   model taken before the task started. Predictions still come from the
//!   classifier head.
//! * `wa`: replay, then new-class classifier rows are rescaled once at the
//!   end of the task so their mean norm matches the old rows.
//!
//! A feature-boosting strategy (FOSTER-style) would plug in as another
//! [`StrategyKind`] with its own `train_epoch` model pair; it is not provided.

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::memory::ExemplarMemory;
use crate::nncore::{
    class_weights, gaussian_noise, mixup, one_hot, train_step, LossSpec, Model, Sgd, Targets,
    TrainConfig,
};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Replay,
    Icarl,
    Wa,
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Replay => "replay",
            StrategyKind::Icarl => "icarl",
            StrategyKind::Wa => "wa",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub use_mixup: bool,
    pub use_class_weights: bool,
}

impl StrategySpec {
    /// MixUp and class weighting help Replay and iCaRL but hurt WA.
    pub fn new(kind: StrategyKind) -> Self {
        let on = !matches!(kind, StrategyKind::Wa);
        Self {
            kind,
            use_mixup: on,
            use_class_weights: on,
        }
    }
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self::new(StrategyKind::Wa)
    }
}

/// Samples of the current task with the unit ids they are trained toward.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
}

impl TaskData {
    pub fn new(samples: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if samples.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        Ok(Self { samples, labels })
    }
}

/// Called before every epoch; returning `Some` replaces the task data.
pub type EpochHook<'a> = dyn FnMut(usize, &Model) -> Result<Option<TaskData>> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    pub epoch_losses: Vec<f64>,
    /// `γ` applied by weight alignment, if it ran.
    pub alignment_gamma: Option<f64>,
}

fn combined(task: &TaskData, memory: &ExemplarMemory, input_dim: usize) -> (Array2<f64>, Vec<usize>) {
    let (mem_x, mem_y) = memory.training_set(input_dim);
    if mem_y.is_empty() {
        return (task.samples.clone(), task.labels.clone());
    }
    let x = ndarray::concatenate(Axis(0), &[task.samples.view(), mem_x.view()])
        .expect("task samples and exemplars share the input width");
    let mut y = task.labels.clone();
    y.extend(mem_y);
    (x, y)
}

/// Trains `model` on one task for `cfg.epochs` epochs.
///
/// `old_units` is the number of classifier units that existed before this
/// task; units `old_units..` are the task's own. Distillation and weight
/// alignment act on that split.
#[allow(clippy::too_many_arguments)]
pub fn run_task_training(
    model: &mut Model,
    mut task: TaskData,
    memory: &ExemplarMemory,
    spec: &StrategySpec,
    cfg: &TrainConfig,
    old_units: usize,
    rng: &mut Rng,
    hook: &mut EpochHook<'_>,
) -> Result<TaskSummary> {
    cfg.validate()?;
    let units = model.out_units();
    if old_units > units {
        return Err(Error::Argument(format!("old units {old_units} exceed total units {units}")));
    }
    let frozen = (spec.kind == StrategyKind::Icarl && old_units > 0).then(|| model.clone());
    let mut sgd = Sgd::new(model, cfg.lr, cfg.momentum);
    let input_dim = model.spec.input_dim;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let (mut x, mut y) = combined(&task, memory, input_dim);

    for epoch in 0..cfg.epochs {
        if let Some(next) = hook(epoch, model)? {
            task = next;
            (x, y) = combined(&task, memory, input_dim);
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= units) {
            return Err(Error::Argument(format!("label {bad} has no classifier unit (of {units})")));
        }
        if y.is_empty() {
            epoch_losses.push(0.0);
            continue;
        }
        let weights = if spec.use_class_weights && cfg.class_weighting {
            let mut counts = vec![0usize; units];
            for &l in &y {
                counts[l] += 1;
            }
            Some(class_weights(&counts)?)
        } else {
            None
        };
        let loss_spec = LossSpec {
            class_weights: weights.as_deref(),
            old_model: frozen.as_ref(),
            distill_weight: cfg.distill_weight,
            temperature: cfg.distill_temperature,
        };
        sgd.lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut bx = x.select(Axis(0), chunk);
            let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            bx = gaussian_noise(&bx, cfg.augment_noise_std, rng);
            let loss = if spec.use_mixup && cfg.mixup_alpha > 0.0 {
                let (mx, my) = mixup(&bx, &one_hot(&by, units)?, cfg.mixup_alpha, rng)?;
                train_step(model, &mut sgd, &mx, Targets::Soft(&my), &loss_spec)?
            } else {
                train_step(model, &mut sgd, &bx, Targets::Hard(&by), &loss_spec)?
            };
            total += loss * chunk.len() as f64;
        }
        epoch_losses.push(total / y.len() as f64);
    }

    let alignment_gamma = if spec.kind == StrategyKind::Wa && old_units > 0 && old_units < units {
        Some(weight_align(model, old_units)?)
    } else {
        None
    };
    Ok(TaskSummary {
        epoch_losses,
        alignment_gamma,
    })
}

fn mean_row_norm(w: ndarray::ArrayView2<f64>) -> f64 {
    let norms: f64 = w.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum();
    norms / w.nrows() as f64
}

/// Scales new-class rows (weights and bias) by `γ = mean‖w_old‖ / mean‖w_new‖`.
pub fn weight_align(model: &mut Model, old_unit_count: usize) -> Result<f64> {
    let units = model.out_units();
    if old_unit_count == 0 || old_unit_count >= units {
        return Err(Error::Argument(format!(
            "weight alignment needs 0 < old units ({old_unit_count}) < total units ({units})"
        )));
    }
    let w = &model.classifier.weights;
    let old = mean_row_norm(w.slice(s![..old_unit_count, ..]));
    let new = mean_row_norm(w.slice(s![old_unit_count.., ..]));
    if !(new > 0.0) {
        return Err(Error::Numerical("new-class weight rows have zero norm".into()));
    }
    let gamma = old / new;
    model
        .classifier
        .weights
        .slice_mut(s![old_unit_count.., ..])
        .mapv_inplace(|v| v * gamma);
    model
        .classifier
        .bias
        .slice_mut(s![old_unit_count..])
        .mapv_inplace(|v| v * gamma);
    Ok(gamma)
}

/// Mean weight-row norms of the old and new unit blocks.
pub fn block_norms(model: &Model, old_unit_count: usize) -> (f64, f64) {
    let w = &model.classifier.weights;
    (
        mean_row_norm(w.slice(s![..old_unit_count, ..])),
        mean_row_norm(w.slice(s![old_unit_count.., ..])),
    )
}
