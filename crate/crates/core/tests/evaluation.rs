mod common;

use common::{ari_by_pairs, nmi_by_entropies};
use icpl::assignment::EncodingTable;
use icpl::evaluation::{ari, cluster_accuracy, nmi, top1_static, MetricsReport};
use icpl::rng::seeded;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn labels(n: usize, k: usize, rng: &mut icpl::rng::Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

proptest! {
    #[test]
    fn metrics_match_oracles(seed in 0u64..100_000, n in 2usize..40, ku in 1usize..6, kv in 1usize..6) {
        let mut rng = seeded(seed);
        let u = labels(n, ku, &mut rng);
        let v = labels(n, kv, &mut rng);
        prop_assert!((ari(&u, &v).unwrap() - ari_by_pairs(&u, &v)).abs() < 1e-9);
        prop_assert!((nmi(&u, &v).unwrap() - nmi_by_entropies(&u, &v)).abs() < 1e-9);
    }

    #[test]
    fn metrics_are_symmetric_and_relabeling_invariant(seed in 0u64..100_000, n in 2usize..40) {
        let mut rng = seeded(seed);
        let u = labels(n, 4, &mut rng);
        let v = labels(n, 3, &mut rng);
        let mut perm: Vec<usize> = (0..4).map(|i| i * 7 + 3).collect();
        perm.shuffle(&mut rng);
        let u2: Vec<usize> = u.iter().map(|&l| perm[l]).collect();
        prop_assert!((nmi(&u, &v).unwrap() - nmi(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&u, &v).unwrap() - ari(&v, &u).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&u2, &v).unwrap() - nmi(&u, &v).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&u2, &v).unwrap() - ari(&u, &v).unwrap()).abs() < 1e-12);
        prop_assert!((cluster_accuracy(&u2, &v).unwrap() - cluster_accuracy(&u, &v).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((ari(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_accuracy_dominates_static_top1(seed in 0u64..100_000) {
        let mut rng = seeded(seed);
        let classes = rng.random_range(2..8);
        let n = rng.random_range(1..60);
        let mut ids: Vec<usize> = (0..classes).map(|c| c * 3 + 1).collect();
        ids.shuffle(&mut rng);
        let mut table = EncodingTable::new();
        table.append(&ids.iter().enumerate().map(|(u, &c)| (u, c)).collect::<Vec<_>>()).unwrap();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let truth: Vec<usize> = (0..n).map(|_| ids[rng.random_range(0..classes)]).collect();
        let s = top1_static(&pred, &table, &truth).unwrap();
        let c = cluster_accuracy(&pred, &truth).unwrap();
        prop_assert!(c >= s - 1e-9, "cluster {c} < static {s}");
    }
}

#[test]
fn reference_values() {
    let a = ari(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
    assert!((a - 4.0 / 7.0).abs() < 1e-12);
    assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
    assert_eq!(nmi(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
    assert_eq!(cluster_accuracy(&[1, 1, 0, 0], &[5, 5, 9, 9]).unwrap(), 100.0);
}

#[test]
fn random_predictions_score_near_chance() {
    let mut rng = seeded(17);
    let classes = 10;
    let mut table = EncodingTable::new();
    table.append_identity(&(0..classes).collect::<Vec<_>>(), &(0..classes).collect::<Vec<_>>()).unwrap();
    let n = 20_000;
    let pred = labels(n, classes, &mut rng);
    let truth = labels(n, classes, &mut rng);
    let acc = top1_static(&pred, &table, &truth).unwrap();
    // Binomial standard error of a 10% rate over 20000 draws is 0.21 points.
    assert!((acc - 10.0).abs() < 1.0, "{acc}");
}

#[test]
fn report_derives_summary_values() {
    let r = MetricsReport::new(vec![90.0, 80.0, 70.0], vec![91.0, 85.0, 80.0], vec![]).unwrap();
    assert_eq!(r.final_accuracy, 70.0);
    assert_eq!(r.average_accuracy, 80.0);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("curve.csv");
    r.write_curve_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().next().unwrap(), "task_id,top1,cluster_acc");
    assert_eq!(text.lines().nth(3).unwrap(), "3,70.00,80.00");
    assert!(MetricsReport::new(vec![1.0], vec![], vec![]).is_err());
}
