//! KMeans over embeddings and confidence-filtered pseudo-labels.
//!
//! Pseudo-labels are cluster ids. Each sample's confidence is the largest
//! entry of a softmax over `−D²/(2σ²)`, where `D` is the sample-to-center
//! distance matrix and `σ` its population standard deviation over all
//! entries. Samples at or above the threshold `α` are kept for training.

use ndarray::{Array2, ArrayView1, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::assignment::{hungarian, Objective};
use crate::rng::{derive_seed, seeded, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations_run: usize,
    /// Euclidean sample-to-center distances, `n × k`.
    pub distances: Array2<f64>,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance from every row of `points` to every row of `centers`.
pub fn distance_matrix(points: &Array2<f64>, centers: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((points.nrows(), centers.nrows()), |(i, j)| {
        squared_distance(points.row(i), centers.row(j)).sqrt()
    })
}

/// Index of the row minimum; the lowest index wins ties.
fn argmin(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v < row[best] {
            best = j;
        }
    }
    best
}

fn plus_plus_seeds(points: &Array2<f64>, k: usize, rng: &mut Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut closest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| squared_distance(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            closest[i] = closest[i].min(squared_distance(p, centers.row(c)));
        }
    }
    centers
}

/// Lloyd iterations from the given seeds until assignments stop changing.
fn lloyd(points: &Array2<f64>, mut centers: Array2<f64>, max_iter: usize) -> Result<KMeansResult> {
    let (n, k) = (points.nrows(), centers.nrows());
    let mut distances = distance_matrix(points, &centers);
    let mut assignments: Vec<usize> = distances.rows().into_iter().map(argmin).collect();
    let mut inertia = inertia_of(&distances, &assignments);
    let mut iterations_run = 0;
    while iterations_run < max_iter {
        iterations_run += 1;
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &points.row(i);
            counts[a] += 1;
        }
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = &sums.row(j) / count as f64;
                centers.row_mut(j).assign(&mean);
            }
        }
        // Empty clusters take the point currently farthest from its center.
        let mut taken = vec![false; n];
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = (0..n)
                .filter(|&i| !taken[i])
                .max_by(|&a, &b| {
                    distances[[a, assignments[a]]]
                        .total_cmp(&distances[[b, assignments[b]]])
                        .then(b.cmp(&a))
                })
                .expect("n >= k");
            taken[far] = true;
            centers.row_mut(j).assign(&points.row(far));
        }
        distances = distance_matrix(points, &centers);
        let next: Vec<usize> = distances.rows().into_iter().map(argmin).collect();
        let next_inertia = inertia_of(&distances, &next);
        let slack = 1e-9 * inertia.max(1.0);
        if next_inertia > inertia + slack {
            return Err(Error::Numerical(format!(
                "Lloyd iteration {iterations_run} increased inertia {inertia} -> {next_inertia}"
            )));
        }
        let converged = next == assignments;
        assignments = next;
        inertia = next_inertia;
        if converged {
            break;
        }
    }
    Ok(KMeansResult {
        centers,
        assignments,
        inertia,
        iterations_run,
        distances,
    })
}

fn inertia_of(distances: &Array2<f64>, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| distances[[i, a]] * distances[[i, a]])
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding; best of `n_init` restarts.
pub fn kmeans(points: &Array2<f64>, k: usize, cfg: KMeansConfig, rng: &mut Rng) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::Argument(format!("kmeans needs n >= k >= 1, got n={n}, k={k}")));
    }
    if cfg.n_init == 0 {
        return Err(Error::Argument("n_init must be >= 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("kmeans input contains non-finite values".into()));
    }
    let base: u64 = rng.random();
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.n_init {
        let mut local = seeded(derive_seed(base, restart as u64));
        let seeds = plus_plus_seeds(points, k, &mut local);
        let run = lloyd(points, seeds, cfg.max_iter)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Confidence of every row and the `σ` used.
pub fn confidence_scores(distances: &Array2<f64>) -> Result<(Vec<f64>, f64)> {
    if distances.ncols() < 2 {
        return Err(Error::Argument("confidence needs at least 2 clusters".into()));
    }
    if distances.is_empty() {
        return Err(Error::Argument("empty distance matrix".into()));
    }
    let sigma = distances.std(0.0);
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Degenerate(format!(
            "distance matrix has standard deviation {sigma}"
        )));
    }
    let denom = 2.0 * sigma * sigma;
    let conf = distances
        .rows()
        .into_iter()
        .map(|row| {
            let scores: Vec<f64> = row.iter().map(|d| -d * d / denom).collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            1.0 / sum
        })
        .collect();
    Ok((conf, sigma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub pseudo_labels: Vec<usize>,
    pub confidences: Vec<f64>,
    pub sigma: f64,
    pub selected: Vec<bool>,
    pub alpha: f64,
    pub clustering: KMeansResult,
}

impl PseudoLabelSet {
    pub fn selected_indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&i| self.selected[i]).collect()
    }

    pub fn selected_fraction(&self) -> f64 {
        if self.selected.is_empty() {
            return 0.0;
        }
        self.selected.iter().filter(|&&s| s).count() as f64 / self.selected.len() as f64
    }

    /// Renames cluster `j` to `perm[j]` everywhere, centers included.
    pub fn relabel(&mut self, perm: &[usize]) {
        for l in &mut self.pseudo_labels {
            *l = perm[*l];
        }
        for a in &mut self.clustering.assignments {
            *a = perm[*a];
        }
        let mut centers = self.clustering.centers.clone();
        let mut distances = self.clustering.distances.clone();
        for (j, &p) in perm.iter().enumerate() {
            centers.row_mut(p).assign(&self.clustering.centers.row(j));
            distances
                .column_mut(p)
                .assign(&self.clustering.distances.column(j));
        }
        self.clustering.centers = centers;
        self.clustering.distances = distances;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Clusters `embeddings` into `k` groups and keeps confidence ≥ `alpha`.
pub fn generate_pseudo_labels(
    embeddings: &Array2<f64>,
    k: usize,
    alpha: f64,
    cfg: KMeansConfig,
    rng: &mut Rng,
) -> Result<PseudoLabelSet> {
    check_alpha(alpha)?;
    let clustering = kmeans(embeddings, k, cfg, rng)?;
    let (confidences, sigma) = confidence_scores(&clustering.distances)?;
    let selected = confidences.iter().map(|&c| c >= alpha).collect();
    Ok(PseudoLabelSet {
        pseudo_labels: clustering.assignments.clone(),
        confidences,
        sigma,
        selected,
        alpha,
        clustering,
    })
}

/// Permutation `perm` with `perm[new] = old` minimizing the total distance
/// between matched centers.
pub fn align_clusters(prev_centers: &Array2<f64>, new_centers: &Array2<f64>) -> Result<Vec<usize>> {
    if prev_centers.dim() != new_centers.dim() {
        return Err(Error::Shape(format!(
            "center sets {:?} and {:?} differ",
            prev_centers.dim(),
            new_centers.dim()
        )));
    }
    let cost = distance_matrix(new_centers, prev_centers);
    let mut perm = vec![0; new_centers.nrows()];
    for (new, old) in hungarian(&cost, Objective::Minimize)? {
        perm[new] = old;
    }
    Ok(perm)
}

/// Embedding mean of every cluster id, for diagnostics and tests.
pub fn cluster_means(points: &Array2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (row, &l) in points.axis_iter(Axis(0)).zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for (j, mut s) in sums.rows_mut().into_iter().enumerate() {
        if counts[j] > 0 {
            s /= counts[j] as f64;
        }
    }
    sums
}
