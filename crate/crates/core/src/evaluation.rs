//! Accuracy under the static encoding, cluster accuracy, NMI and ARI.
//!
//! Accuracies are percentages in `[0, 100]`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::assignment::{encode_predictions, hungarian, EncodingTable, Objective};
use crate::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("labelings have lengths {a} and {b}")));
    }
    Ok(())
}

/// Top-1 after mapping unit predictions through the fixed encoding.
pub fn top1_static(predictions: &[usize], table: &EncodingTable, truth: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    let encoded = encode_predictions(table, predictions)?;
    let hits = encoded.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Dense relabeling of arbitrary ids to `0..m`, in sorted id order.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

fn joint_counts(u: &[usize], v: &[usize]) -> Array2<f64> {
    let (cu, ru) = compact(u);
    let (cv, rv) = compact(v);
    let mut m = Array2::zeros((ru, rv));
    for (a, b) in cu.into_iter().zip(cv) {
        m[[a, b]] += 1.0;
    }
    m
}

/// Accuracy under the best one-to-one relabeling of predictions.
pub fn cluster_accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(predictions.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    let counts = joint_counts(predictions, truth);
    let pairs = hungarian(&counts, Objective::Maximize)?;
    let hits: f64 = pairs.iter().map(|&(i, j)| counts[[i, j]]).sum();
    Ok(100.0 * hits / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = f64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0.0)
        .map(|c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum()
}

/// `I(U,V) / sqrt(H(U)·H(V))`. Two constant labelings score 1; one constant
/// labeling against a non-constant one scores 0.
pub fn nmi(u: &[usize], v: &[usize]) -> Result<f64> {
    check_lengths(u.len(), v.len())?;
    if u.is_empty() {
        return Err(Error::Argument("nmi of empty labelings".into()));
    }
    let n = u.len() as f64;
    let joint = joint_counts(u, v);
    let rows = joint.sum_axis(ndarray::Axis(1));
    let cols = joint.sum_axis(ndarray::Axis(0));
    let hu = entropy(rows.iter().copied(), n);
    let hv = entropy(cols.iter().copied(), n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for ((i, j), &c) in joint.indexed_iter() {
        if c > 0.0 {
            mi += c / n * (n * c / (rows[i] * cols[j])).ln();
        }
    }
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from pair counts of the contingency table.
pub fn ari(u: &[usize], v: &[usize]) -> Result<f64> {
    check_lengths(u.len(), v.len())?;
    if u.len() < 2 {
        return Err(Error::Argument("ari needs at least 2 samples".into()));
    }
    let joint = joint_counts(u, v);
    let index: f64 = joint.iter().map(|&c| pairs(c)).sum();
    let a: f64 = joint.sum_axis(ndarray::Axis(1)).iter().map(|&c| pairs(c)).sum();
    let b: f64 = joint.sum_axis(ndarray::Axis(0)).iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(u.len() as f64);
    let max = (a + b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Selection statistics recorded at each pseudo-label regeneration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegenerationRecord {
    pub task: usize,
    pub epoch: usize,
    pub selected_fraction: f64,
    pub nmi: f64,
    pub ari: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub per_task_top1: Vec<f64>,
    pub final_accuracy: f64,
    pub average_accuracy: f64,
    pub cluster_accuracy: Vec<f64>,
    pub nmi_trace: Vec<f64>,
    pub ari_trace: Vec<f64>,
    pub selected_fraction: Vec<f64>,
    pub regenerations: Vec<RegenerationRecord>,
}

impl MetricsReport {
    pub fn new(
        per_task_top1: Vec<f64>,
        cluster_accuracy: Vec<f64>,
        regenerations: Vec<RegenerationRecord>,
    ) -> Result<Self> {
        if per_task_top1.is_empty() || per_task_top1.len() != cluster_accuracy.len() {
            return Err(Error::Shape(format!(
                "{} task accuracies vs {} cluster accuracies",
                per_task_top1.len(),
                cluster_accuracy.len()
            )));
        }
        let final_accuracy = *per_task_top1.last().expect("non-empty");
        let average_accuracy = per_task_top1.iter().sum::<f64>() / per_task_top1.len() as f64;
        Ok(Self {
            final_accuracy,
            average_accuracy,
            nmi_trace: regenerations.iter().map(|r| r.nmi).collect(),
            ari_trace: regenerations.iter().map(|r| r.ari).collect(),
            selected_fraction: regenerations.iter().map(|r| r.selected_fraction).collect(),
            per_task_top1,
            cluster_accuracy,
            regenerations,
        })
    }

    pub fn task_regenerations(&self, task: usize) -> impl Iterator<Item = &RegenerationRecord> {
        self.regenerations.iter().filter(move |r| r.task == task)
    }

    /// `task_id,top1,cluster_acc`, one row per task, 1-based ids.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("task_id,top1,cluster_acc\n");
        for (k, (t, c)) in self.per_task_top1.iter().zip(&self.cluster_accuracy).enumerate() {
            out.push_str(&format!("{},{t:.2},{c:.2}\n", k + 1));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
