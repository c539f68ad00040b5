use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution, Normal};

use crate::rng::Rng;
use crate::{Error, Result};

pub fn one_hot(ids: &[usize], classes: usize) -> Result<Array2<f64>> {
    super::Targets::Hard(ids).to_dense(classes)
}

/// MixUp with one `λ ~ Beta(α, α)` per batch, pairing each sample with a
/// random partner. `alpha == 0` returns the inputs unchanged.
pub fn mixup(
    batch: &Array2<f64>,
    targets: &Array2<f64>,
    alpha: f64,
    rng: &mut Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(alpha >= 0.0) {
        return Err(Error::Argument(format!("mixup alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok((batch.clone(), targets.clone()));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Argument(e.to_string()))?;
    let lambda = beta.sample(rng);
    let mut partners: Vec<usize> = (0..batch.nrows()).collect();
    partners.shuffle(rng);
    Ok(mixup_with(batch, targets, lambda, &partners))
}

/// `x̃ᵢ = λxᵢ + (1−λ)x_{p(i)}` and likewise for targets.
pub fn mixup_with(
    batch: &Array2<f64>,
    targets: &Array2<f64>,
    lambda: f64,
    partners: &[usize],
) -> (Array2<f64>, Array2<f64>) {
    let mix = |m: &Array2<f64>| {
        let mut out = m.clone();
        for (i, &j) in partners.iter().enumerate() {
            let mut row = out.row_mut(i);
            row *= lambda;
            row.scaled_add(1.0 - lambda, &m.row(j));
        }
        out
    };
    (mix(batch), mix(targets))
}

/// Additive Gaussian noise, the stand-in augmentation for feature vectors.
pub fn gaussian_noise(batch: &Array2<f64>, std: f64, rng: &mut Rng) -> Array2<f64> {
    if std <= 0.0 {
        return batch.clone();
    }
    let normal = Normal::new(0.0, std).expect("std is positive and finite");
    batch.mapv(|x| x + normal.sample(rng))
}

/// Inverse-frequency weights `total / (present · count_c)`; absent classes get 0.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if total == 0 {
        return Err(Error::Argument("class counts are all zero".into()));
    }
    Ok(counts
        .iter()
        .map(|&c| {
            if c == 0 {
                0.0
            } else {
                total as f64 / (present * c) as f64
            }
        })
        .collect())
}
