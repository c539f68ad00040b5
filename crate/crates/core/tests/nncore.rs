mod common;

use common::max_gradient_error;
use icpl::nncore::{
    class_weights, load_model, mixup_with, one_hot, save_model, train_step, LossSpec, Model, NetworkSpec, Sgd, Targets,
};
use icpl::rng::seeded;
use ndarray::Array2;
use rand::Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn three_layer(classes: usize, seed: u64) -> Model {
    Model::new(NetworkSpec::new(5, vec![7, 6], 4), classes, &mut seeded(seed)).unwrap()
}

fn batch(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded(seed);
    Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    let m = three_layer(4, 1);
    let x = batch(6, 2);
    let y = [0, 1, 2, 3, 1, 0];
    let err = max_gradient_error(&m, &x, Targets::Hard(&y), &LossSpec::default(), EPS);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn weighted_cross_entropy_gradients_match() {
    let m = three_layer(3, 3);
    let x = batch(5, 4);
    let y = [0, 0, 1, 2, 2];
    let w = [0.5, 2.0, 1.25];
    let spec = LossSpec {
        class_weights: Some(&w),
        ..LossSpec::default()
    };
    let err = max_gradient_error(&m, &x, Targets::Hard(&y), &spec, EPS);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn distillation_gradients_match() {
    let old = three_layer(3, 5);
    let mut m = old.clone();
    m.grow_classifier(2, &mut seeded(6)).unwrap();
    // Move the student away from the teacher so the KD term is non-trivial.
    m.layers[0].weights.mapv_inplace(|v| v * 1.1);
    let x = batch(6, 7);
    let y = [3, 4, 0, 1, 2, 4];
    let spec = LossSpec {
        old_model: Some(&old),
        distill_weight: 0.7,
        temperature: 2.0,
        ..LossSpec::default()
    };
    let err = max_gradient_error(&m, &x, Targets::Hard(&y), &spec, EPS);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn mixup_soft_target_gradients_match() {
    let m = three_layer(4, 8);
    let x = batch(6, 9);
    let t = one_hot(&[0, 1, 2, 3, 0, 2], 4).unwrap();
    let (xm, tm) = mixup_with(&x, &t, 0.35, &[3, 2, 5, 0, 1, 4]);
    let err = max_gradient_error(&m, &xm, Targets::Soft(&tm), &LossSpec::default(), EPS);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn growing_keeps_old_logits() {
    let m = three_layer(3, 10);
    let mut g = m.clone();
    g.grow_classifier(4, &mut seeded(11)).unwrap();
    let x = batch(8, 12);
    let a = m.forward(&x).unwrap().logits;
    let b = g.forward(&x).unwrap().logits;
    assert_eq!(b.ncols(), 7);
    assert_eq!(a, b.slice(ndarray::s![.., ..3]).to_owned());
}

#[test]
fn sgd_fits_a_separable_problem() {
    let mut m = three_layer(2, 13);
    let x = batch(40, 14);
    let y: Vec<usize> = x.rows().into_iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
    let mut sgd = Sgd::new(&m, 0.1, 0.9);
    for _ in 0..300 {
        train_step(&mut m, &mut sgd, &x, Targets::Hard(&y), &LossSpec::default()).unwrap();
    }
    let pred = m.predict(&x).unwrap();
    let hits = pred.iter().zip(&y).filter(|(a, b)| a == b).count();
    assert!(hits >= 38, "{hits}/40");
}

#[test]
fn class_weights_balance_total_mass() {
    let counts = [30, 10, 0, 60];
    let w = class_weights(&counts).unwrap();
    let total: f64 = counts.iter().zip(&w).map(|(&c, w)| c as f64 * w).sum();
    assert!((total - 100.0).abs() < 1e-9);
    assert_eq!(w[2], 0.0);
    assert!((w[1] * 10.0 - w[3] * 60.0).abs() < 1e-9);
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let m = three_layer(5, 15);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    save_model(&m, &p).unwrap();
    assert_eq!(load_model(&p).unwrap(), m);
    std::fs::write(&p, "{\"format\":\"other\"}").unwrap();
    assert!(load_model(&p).is_err());
}
