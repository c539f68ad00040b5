//! Optimal one-to-one assignment and the append-only static encoding table.
//!
//! [`hungarian`] runs the O(n³) shortest-augmenting-path Kuhn–Munkres solver
//! on the square-padded cost matrix, then walks the zero-reduced-cost edges
//! to return the lexicographically smallest among all optimal assignments.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

/// Optimal assignment of `min(rows, cols)` pairs, sorted by row.
pub fn hungarian(cost: &Array2<f64>, objective: Objective) -> Result<Vec<(usize, usize)>> {
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("cost matrix contains non-finite entries".into()));
    }
    let (rows, cols) = cost.dim();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let n = rows.max(cols);
    let sign = match objective {
        Objective::Minimize => 1.0,
        Objective::Maximize => -1.0,
    };
    let mut a = Array2::zeros((n, n));
    for ((i, j), &v) in cost.indexed_iter() {
        a[[i, j]] = sign * v;
    }
    let (row_to_col, u, v) = solve_square(&a);
    let scale = a.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale;
    let tight = |i: usize, j: usize| a[[i, j]] - u[i] - v[j] <= tol;
    let matching = lexicographic_tight_matching(n, row_to_col, tight);
    Ok(matching
        .into_iter()
        .enumerate()
        .filter(|&(i, j)| i < rows && j < cols)
        .collect())
}

/// Sum of `cost` over an assignment.
pub fn assignment_cost(cost: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[[i, j]]).sum()
}

/// Square minimization. Returns the row→column matching and dual potentials
/// `u`, `v` with `a[i][j] ≥ u[i] + v[j]`, equality on matched edges.
fn solve_square(a: &Array2<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    // 1-based with index 0 as the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every optimal assignment uses only tight edges of an optimal dual, so the
/// lexicographically smallest optimum is the lexicographically smallest
/// perfect matching of the tight subgraph. Rows are fixed in order; for each,
/// smaller tight columns are tried by looking for an alternating path that
/// frees the current partner only among rows not yet fixed.
fn lexicographic_tight_matching(
    n: usize,
    mut row_to_col: Vec<usize>,
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut col_to_row = vec![0; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    for i in 0..n {
        let current = row_to_col[i];
        for c in 0..current {
            if !tight(i, c) || col_to_row[c] < i {
                continue;
            }
            // Give c to row i; the displaced row must reach `current`.
            let displaced = col_to_row[c];
            let mut visited = vec![false; n];
            visited[c] = true;
            let saved = (row_to_col.clone(), col_to_row.clone());
            row_to_col[i] = c;
            col_to_row[c] = i;
            if reassign(displaced, i, &tight, &mut row_to_col, &mut col_to_row, &mut visited, current) {
                break;
            }
            (row_to_col, col_to_row) = saved;
        }
    }
    row_to_col
}

/// Kuhn-style DFS: find a tight column for `row` (rows ≤ `fixed` are frozen),
/// ending at the freed column `target`.
fn reassign(
    row: usize,
    fixed: usize,
    tight: &impl Fn(usize, usize) -> bool,
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
    visited: &mut [bool],
    target: usize,
) -> bool {
    let n = row_to_col.len();
    for c in 0..n {
        if visited[c] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
        let other = col_to_row[c];
        if other <= fixed {
            continue;
        }
        if reassign(other, fixed, tight, row_to_col, col_to_row, visited, target) {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
    }
    false
}

/// Append-only, injective map from classifier output units to true class ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingTable {
    entries: BTreeMap<usize, usize>,
    task_boundaries: Vec<Vec<usize>>,
}

impl EncodingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, unit: usize) -> Option<usize> {
        self.entries.get(&unit).copied()
    }

    pub fn entries(&self) -> &BTreeMap<usize, usize> {
        &self.entries
    }

    /// Units appended by each task, in task order.
    pub fn task_boundaries(&self) -> &[Vec<usize>] {
        &self.task_boundaries
    }

    /// Appends one task's `(unit, class)` pairs atomically: either all are
    /// inserted or, on any conflict, none.
    pub fn append(&mut self, pairs: &[(usize, usize)]) -> Result<()> {
        let mut units = std::collections::BTreeSet::new();
        let mut classes = std::collections::BTreeSet::new();
        let used: std::collections::BTreeSet<_> = self.entries.values().copied().collect();
        for &(unit, class) in pairs {
            if self.entries.contains_key(&unit) || !units.insert(unit) {
                return Err(Error::Consistency(format!("unit {unit} is already encoded")));
            }
            if used.contains(&class) || !classes.insert(class) {
                return Err(Error::Consistency(format!("class {class} is already encoded")));
            }
        }
        self.entries.extend(pairs.iter().copied());
        self.task_boundaries.push(pairs.iter().map(|p| p.0).collect());
        Ok(())
    }

    /// Identity entries for a labeled task: `units[i] ↦ classes[i]`.
    pub fn append_identity(&mut self, units: &[usize], classes: &[usize]) -> Result<()> {
        if units.len() != classes.len() {
            return Err(Error::Shape(format!(
                "{} units for {} classes",
                units.len(),
                classes.len()
            )));
        }
        let pairs: Vec<_> = units.iter().copied().zip(classes.iter().copied()).collect();
        self.append(&pairs)
    }

    /// True if every entry of `earlier` is present here unchanged and its task
    /// boundaries are a prefix of ours.
    pub fn extends(&self, earlier: &EncodingTable) -> bool {
        earlier.entries.iter().all(|(u, c)| self.entries.get(u) == Some(c))
            && self.task_boundaries.starts_with(&earlier.task_boundaries)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: Self = serde_json::from_str(&text)?;
        let mut seen = std::collections::BTreeSet::new();
        if !table.entries.values().all(|c| seen.insert(*c)) {
            return Err(Error::Consistency(format!("{}: encoding is not injective", path.display())));
        }
        let mut bounded: Vec<usize> = table.task_boundaries.concat();
        bounded.sort_unstable();
        if !bounded.iter().copied().eq(table.entries.keys().copied()) {
            return Err(Error::Consistency(format!(
                "{}: task boundaries do not cover the encoded units exactly",
                path.display()
            )));
        }
        Ok(table)
    }
}

/// Matches new units to new classes by maximum agreement and appends the
/// result. `contingency[i][j]` counts samples in cluster `new_unit_ids[i]`
/// whose true class is `new_class_ids[j]`.
pub fn extend_encoding(
    table: &mut EncodingTable,
    contingency: &Array2<f64>,
    new_unit_ids: &[usize],
    new_class_ids: &[usize],
) -> Result<()> {
    if contingency.dim() != (new_unit_ids.len(), new_class_ids.len()) {
        return Err(Error::Shape(format!(
            "contingency {:?} vs {} units × {} classes",
            contingency.dim(),
            new_unit_ids.len(),
            new_class_ids.len()
        )));
    }
    if let Some(u) = new_unit_ids.iter().find(|u| table.entries.contains_key(u)) {
        return Err(Error::Consistency(format!("unit {u} is already encoded")));
    }
    let pairs: Vec<_> = hungarian(contingency, Objective::Maximize)?
        .into_iter()
        .map(|(i, j)| (new_unit_ids[i], new_class_ids[j]))
        .collect();
    table.append(&pairs)
}

/// Maps raw unit predictions to class ids through the table.
pub fn encode_predictions(table: &EncodingTable, predictions: &[usize]) -> Result<Vec<usize>> {
    predictions
        .iter()
        .map(|&u| {
            table
                .get(u)
                .ok_or_else(|| Error::Consistency(format!("predicted unit {u} has no encoding")))
        })
        .collect()
}

/// Counts of (cluster, class) co-occurrences over `units` and `classes` index sets.
pub fn contingency(
    assigned: &[usize],
    truth: &[usize],
    units: &[usize],
    classes: &[usize],
) -> Result<Array2<f64>> {
    if assigned.len() != truth.len() {
        return Err(Error::Shape("assignment and truth lengths differ".into()));
    }
    let unit_pos: BTreeMap<_, _> = units.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let class_pos: BTreeMap<_, _> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut m = Array2::zeros((units.len(), classes.len()));
    for (a, t) in assigned.iter().zip(truth) {
        if let (Some(&i), Some(&j)) = (unit_pos.get(a), class_pos.get(t)) {
            m[[i, j]] += 1.0;
        }
    }
    Ok(m)
}
