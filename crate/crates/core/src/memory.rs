//! Fixed-budget exemplar memory filled by herding.
//!
//! Classes are keyed by classifier unit id. For unlabeled tasks that id is
//! the pseudo-class unit, never a ground-truth label.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Greedy herding: step `t` picks the candidate that brings the running mean
/// of the `t` chosen embeddings closest to the overall mean.
pub fn herding_select(embeddings: &Array2<f64>, count: usize) -> Result<Vec<usize>> {
    let n = embeddings.nrows();
    if count > n {
        return Err(Error::Argument(format!("cannot herd {count} exemplars from {n} samples")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mean = embeddings.mean_axis(Axis(0)).expect("n >= 1");
    let mut sum = Array1::<f64>::zeros(embeddings.ncols());
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(count);
    for t in 1..=count {
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in embeddings.rows().into_iter().enumerate() {
            if taken[i] {
                continue;
            }
            let dist: f64 = mean
                .iter()
                .zip(sum.iter().zip(row))
                .map(|(m, (s, x))| {
                    let d = m - (s + x) / t as f64;
                    d * d
                })
                .sum();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((i, dist));
            }
        }
        let (pick, _) = best.expect("count <= n");
        taken[pick] = true;
        sum += &embeddings.row(pick);
        order.push(pick);
    }
    Ok(order)
}

/// Samples of one class to admit into memory.
#[derive(Debug, Clone)]
pub struct ClassSamples {
    pub class: usize,
    pub samples: Array2<f64>,
    pub embeddings: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExemplarMemory {
    budget: usize,
    /// Exemplar features per class, in herding order.
    per_class: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl ExemplarMemory {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            per_class: BTreeMap::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.per_class.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_class.keys().copied()
    }

    pub fn exemplars(&self, class: usize) -> Option<&[Vec<f64>]> {
        self.per_class.get(&class).map(Vec::as_slice)
    }

    /// Per-class quota: `budget / classes`, remainder to the lowest ids.
    pub fn quotas(budget: usize, classes: &[usize]) -> BTreeMap<usize, usize> {
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return BTreeMap::new();
        }
        let base = budget / sorted.len();
        let extra = budget % sorted.len();
        sorted
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, base + usize::from(i < extra)))
            .collect()
    }

    /// Keeps the herding prefix of each class that fits its quota.
    pub fn truncate_to(&mut self, quotas: &BTreeMap<usize, usize>) {
        for (class, list) in &mut self.per_class {
            list.truncate(quotas.get(class).copied().unwrap_or(0));
        }
        self.per_class.retain(|_, l| !l.is_empty());
    }

    /// Re-splits the budget over old and new classes, shrinking old classes
    /// to their herding prefix and herding each new class up to its quota.
    pub fn rebalance(&mut self, new_classes: Vec<ClassSamples>) -> Result<()> {
        for c in &new_classes {
            if self.per_class.contains_key(&c.class) {
                return Err(Error::Consistency(format!("class {} is already in memory", c.class)));
            }
            if c.samples.nrows() != c.embeddings.nrows() {
                return Err(Error::Shape(format!(
                    "class {}: {} samples but {} embeddings",
                    c.class,
                    c.samples.nrows(),
                    c.embeddings.nrows()
                )));
            }
        }
        let mut all: Vec<usize> = self.per_class.keys().copied().collect();
        all.extend(new_classes.iter().map(|c| c.class));
        let quotas = Self::quotas(self.budget, &all);
        self.truncate_to(&quotas);
        for c in new_classes {
            let take = quotas[&c.class].min(c.samples.nrows());
            let order = herding_select(&c.embeddings, take)?;
            let list: Vec<Vec<f64>> = order.into_iter().map(|i| c.samples.row(i).to_vec()).collect();
            if !list.is_empty() {
                self.per_class.insert(c.class, list);
            }
        }
        debug_assert!(self.len() <= self.budget);
        Ok(())
    }

    /// All exemplars as a sample matrix with their unit labels, class order.
    pub fn training_set(&self, input_dim: usize) -> (Array2<f64>, Vec<usize>) {
        let mut data = Vec::with_capacity(self.len() * input_dim);
        let mut labels = Vec::with_capacity(self.len());
        for (&class, list) in &self.per_class {
            for x in list {
                data.extend_from_slice(x);
                labels.push(class);
            }
        }
        let m = Array2::from_shape_vec((labels.len(), input_dim), data)
            .expect("exemplars share the input width");
        (m, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.len() > m.budget {
            return Err(Error::Consistency(format!(
                "{}: {} exemplars exceed budget {}",
                path.display(),
                m.len(),
                m.budget
            )));
        }
        Ok(m)
    }
}
