//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use icpl::nncore::{loss_and_grad, Dense, Grads, LossSpec, Model, Targets};
use itertools::Itertools;
use ndarray::Array2;

/// Best total of an injective row/column matching by enumeration.
pub fn brute_force_best(cost: &Array2<f64>, maximize: bool) -> f64 {
    let (r, c) = cost.dim();
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    if r <= c {
        for cols in (0..c).permutations(r) {
            let v: f64 = cols.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
            if better(v, best) {
                best = v;
            }
        }
    } else {
        for rows in (0..r).permutations(c) {
            let v: f64 = rows.iter().enumerate().map(|(j, &i)| cost[[i, j]]).sum();
            if better(v, best) {
                best = v;
            }
        }
    }
    best
}

fn dense_params(d: &Dense) -> usize {
    d.weights.len() + d.bias.len()
}

fn param_mut(model: &mut Model, layer: usize, idx: usize) -> &mut f64 {
    let d = if layer < model.layers.len() {
        &mut model.layers[layer]
    } else {
        &mut model.classifier
    };
    let nw = d.weights.len();
    if idx < nw {
        let cols = d.weights.ncols();
        &mut d.weights[[idx / cols, idx % cols]]
    } else {
        &mut d.bias[idx - nw]
    }
}

fn grad_at(g: &Grads, layer: usize, idx: usize) -> f64 {
    let d = if layer < g.layers.len() { &g.layers[layer] } else { &g.classifier };
    let nw = d.weights.len();
    if idx < nw {
        let cols = d.weights.ncols();
        d.weights[[idx / cols, idx % cols]]
    } else {
        d.bias[idx - nw]
    }
}

/// Largest relative error between analytic gradients and central
/// differences over every parameter.
pub fn max_gradient_error(model: &Model, batch: &Array2<f64>, targets: Targets<'_>, spec: &LossSpec<'_>, eps: f64) -> f64 {
    let (_, grads) = loss_and_grad(model, batch, targets, spec).unwrap();
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for layer in 0..=model.layers.len() {
        let count = if layer < model.layers.len() {
            dense_params(&model.layers[layer])
        } else {
            dense_params(&model.classifier)
        };
        for idx in 0..count {
            let orig = *param_mut(&mut probe, layer, idx);
            *param_mut(&mut probe, layer, idx) = orig + eps;
            let up = loss_and_grad(&probe, batch, targets, spec).unwrap().0;
            *param_mut(&mut probe, layer, idx) = orig - eps;
            let down = loss_and_grad(&probe, batch, targets, spec).unwrap().0;
            *param_mut(&mut probe, layer, idx) = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = grad_at(&grads, layer, idx);
            let scale = numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    worst
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Plain Lloyd iterations from given initial centers; returns the inertia.
pub fn lloyd_inertia(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, iters: usize) -> f64 {
    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    for _ in 0..iters {
        for (i, p) in points.iter().enumerate() {
            labels[i] = (0..centers.len())
                .min_by(|&a, &b| sq_dist(p, &centers[a]).total_cmp(&sq_dist(p, &centers[b])))
                .unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                *center = (0..dim)
                    .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
                    .collect();
            }
        }
    }
    points
        .iter()
        .map(|p| centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Greedy herding written as `argmin ||t·μ − S − x||²`.
pub fn herding_oracle(points: &[Vec<f64>], count: usize) -> Vec<usize> {
    let n = points.len() as f64;
    let dim = points[0].len();
    let mu: Vec<f64> = (0..dim).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let mut s = vec![0.0; dim];
    let mut chosen: Vec<usize> = Vec::new();
    for t in 1..=count {
        let target: Vec<f64> = (0..dim).map(|j| t as f64 * mu[j] - s[j]).collect();
        let pick = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .min_by(|&a, &b| sq_dist(&target, &points[a]).total_cmp(&sq_dist(&target, &points[b])))
            .unwrap();
        for j in 0..dim {
            s[j] += points[pick][j];
        }
        chosen.push(pick);
    }
    chosen
}

/// ARI by explicit enumeration of all sample pairs.
pub fn ari_by_pairs(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len();
    let (mut both, mut only_u, mut only_v, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let a = u[i] == u[j];
            let b = v[i] == v[j];
            total += 1.0;
            if a && b {
                both += 1.0;
            }
            if a {
                only_u += 1.0;
            }
            if b {
                only_v += 1.0;
            }
        }
    }
    let expected = only_u * only_v / total;
    let max = (only_u + only_v) / 2.0;
    if max == expected {
        1.0
    } else {
        (both - expected) / (max - expected)
    }
}

/// NMI via `H(U) + H(V) − H(U,V)` with geometric normalization.
pub fn nmi_by_entropies(u: &[usize], v: &[usize]) -> f64 {
    use std::collections::HashMap;
    let n = u.len() as f64;
    let h = |counts: HashMap<(usize, usize), usize>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let count = |f: &dyn Fn(usize) -> (usize, usize)| {
        let mut m = HashMap::new();
        for i in 0..u.len() {
            *m.entry(f(i)).or_insert(0) += 1;
        }
        m
    };
    let hu = h(count(&|i| (u[i], 0)));
    let hv = h(count(&|i| (0, v[i])));
    let huv = h(count(&|i| (u[i], v[i])));
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    if hu == 0.0 || hv == 0.0 {
        return 0.0;
    }
    (hu + hv - huv) / (hu * hv).sqrt()
}
