use ndarray::{s, Array2};

use super::{Grads, Model};
use crate::{Error, Result};

/// Training targets: hard unit ids or one probability row per sample.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Hard(&'a [usize]),
    Soft(&'a Array2<f64>),
}

impl Targets<'_> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(t) => t.len(),
            Targets::Soft(t) => t.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn to_dense(self, classes: usize) -> Result<Array2<f64>> {
        match self {
            Targets::Hard(ids) => {
                let mut m = Array2::zeros((ids.len(), classes));
                for (i, &c) in ids.iter().enumerate() {
                    if c >= classes {
                        return Err(Error::Argument(format!(
                            "target {c} out of range for {classes} output units"
                        )));
                    }
                    m[[i, c]] = 1.0;
                }
                Ok(m)
            }
            Targets::Soft(m) => {
                if m.ncols() != classes {
                    return Err(Error::Shape(format!(
                        "soft targets have {} columns, model has {classes} units",
                        m.ncols()
                    )));
                }
                for (i, row) in m.rows().into_iter().enumerate() {
                    let sum: f64 = row.sum();
                    if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
                        return Err(Error::Argument(format!(
                            "soft target row {i} is not a distribution (sum {sum})"
                        )));
                    }
                }
                Ok(m.clone())
            }
        }
    }
}

/// Loss terms beyond plain cross-entropy.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossSpec<'a> {
    /// Per-unit weights; `None` means uniform.
    pub class_weights: Option<&'a [f64]>,
    /// Frozen pre-task model whose logits are distilled on its own units.
    pub old_model: Option<&'a Model>,
    pub distill_weight: f64,
    pub temperature: f64,
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|z| z - lse);
    }
    out
}

fn sample_weights(targets: &Array2<f64>, class_weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match class_weights {
        None => Ok(vec![1.0; targets.nrows()]),
        Some(w) if w.len() != targets.ncols() => Err(Error::Shape(format!(
            "{} class weights for {} output units",
            w.len(),
            targets.ncols()
        ))),
        Some(w) => Ok(targets
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(w).map(|(t, w)| t * w).sum())
            .collect()),
    }
}

/// Weighted cross-entropy, averaged over the batch. Each sample is weighted
/// by its target-averaged class weight. Returns the loss and `dL/dlogits`.
pub fn cross_entropy(
    logits: &Array2<f64>,
    targets: &Array2<f64>,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Array2<f64>)> {
    let n = logits.nrows() as f64;
    let weights = sample_weights(targets, class_weights)?;
    let log_p = log_softmax_rows(logits);
    let p = log_p.mapv(f64::exp);
    let mut loss = 0.0;
    let mut grad = p - targets;
    for (i, mut g) in grad.rows_mut().into_iter().enumerate() {
        let ce: f64 = -targets
            .row(i)
            .iter()
            .zip(log_p.row(i))
            .map(|(t, lp)| if *t == 0.0 { 0.0 } else { t * lp })
            .sum::<f64>();
        loss += weights[i] * ce;
        g *= weights[i] / n;
    }
    Ok((loss / n, grad))
}

/// `T² · KL(softmax(old/T) ‖ softmax(new/T))`, averaged over the batch.
/// Returns the loss and its gradient with respect to `new`.
pub fn distillation(
    old_logits: &Array2<f64>,
    new_logits: &Array2<f64>,
    temperature: f64,
) -> (f64, Array2<f64>) {
    let n = new_logits.nrows() as f64;
    let t = temperature;
    let q_log = log_softmax_rows(&(old_logits / t));
    let p_log = log_softmax_rows(&(new_logits / t));
    let q = q_log.mapv(f64::exp);
    let p = p_log.mapv(f64::exp);
    let kl: f64 = ndarray::Zip::from(&q)
        .and(&q_log)
        .and(&p_log)
        .fold(0.0, |acc, &q, &ql, &pl| acc + q * (ql - pl));
    let grad = (p - q) * (t / n);
    (t * t * kl / n, grad)
}

/// Total loss of `model` on one batch together with every parameter gradient.
pub fn loss_and_grad(
    model: &Model,
    batch: &Array2<f64>,
    targets: Targets<'_>,
    spec: &LossSpec<'_>,
) -> Result<(f64, Grads)> {
    if targets.len() != batch.nrows() {
        return Err(Error::Shape(format!(
            "{} targets for {} samples",
            targets.len(),
            batch.nrows()
        )));
    }
    if batch.nrows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    let dense = targets.to_dense(model.out_units())?;
    let trace = model.trace(batch)?;
    let (mut loss, mut d_logits) = cross_entropy(&trace.logits, &dense, spec.class_weights)?;

    if let Some(old) = spec.old_model.filter(|_| spec.distill_weight > 0.0) {
        let old_units = old.out_units();
        if old_units > model.out_units() {
            return Err(Error::Shape(format!(
                "old model has {old_units} units, current model only {}",
                model.out_units()
            )));
        }
        if old_units > 0 {
            let old_logits = old.forward(batch)?.logits;
            let new_old = trace.logits.slice(s![.., ..old_units]).to_owned();
            let (kd, kd_grad) = distillation(&old_logits, &new_old, spec.temperature);
            loss += spec.distill_weight * kd;
            d_logits
                .slice_mut(s![.., ..old_units])
                .scaled_add(spec.distill_weight, &kd_grad);
        }
    }

    if !loss.is_finite() {
        let max_logit = trace.logits.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        return Err(Error::Numerical(format!(
            "non-finite loss {loss} (max |logit| {max_logit:.3e}, batch {})",
            batch.nrows()
        )));
    }
    let grads = model.backward(&trace, &d_logits);
    Ok((loss, grads))
}
