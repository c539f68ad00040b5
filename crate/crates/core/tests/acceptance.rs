//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use icpl::assignment::{assignment_cost, hungarian, EncodingTable, Objective};
use icpl::clustering::{confidence_scores, generate_pseudo_labels, KMeansConfig};
use icpl::dataio::{synth_centers, SynthConfig};
use icpl::evaluation::{ari, cluster_accuracy, nmi, top1_static};
use icpl::flops::{kmeans_gflops, pseudo_label_gflops, supervised_gflops, unsupervised_gflops};
use icpl::memory::herding_select;
use icpl::nncore::{argmax_rows, mixup_with, one_hot, LossSpec, Model, NetworkSpec, Targets};
use icpl::pipeline::{prepare_stream, run_incremental, DatasetSource, RunConfig, RunReport};
use icpl::rng::{seeded, Rng};
use icpl::strategies::{block_norms, weight_align, StrategyKind};
use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn flops_exactness() -> Outcome {
    let km = kmeans_gflops(50.0, 5000.0, 64.0, 10.0);
    let sup = supervised_gflops(7000.0, 170.0, 0.41);
    let pseudo = pseudo_label_gflops(0.1377, 5000.0, 0.16);
    let unsup = unsupervised_gflops(5000.0, 170.0, 0.41, 17.0, 688.66);
    let good = (km - 0.16).abs() < 1e-12
        && (sup - 487_900.0).abs() < 1e-6
        && (pseudo - 688.66).abs() <= 0.01
        && (unsup - 360_207.0).abs() <= 1.0;
    let msg = format!("kmeans {km:.4}, supervised {sup:.2}, pseudo {pseudo:.4}, unsupervised {unsup:.2}");
    check(good, msg.clone(), msg)
}

fn protocol_pathology() -> Outcome {
    // Task 1: units 0,1 -> classes 0,1. Task 2: units 2,3 -> classes 2,3.
    let mut table = EncodingTable::new();
    table.append_identity(&[0, 1], &[0, 1]).unwrap();
    table.append_identity(&[2, 3], &[2, 3]).unwrap();
    let truth: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, 25)).collect();
    // Old and new units exchanged: class 0 lands on unit 2, class 2 on unit 0, ...
    let swap = [2, 3, 0, 1];
    let pred: Vec<usize> = truth.iter().map(|&c| swap[c]).collect();
    let ca = cluster_accuracy(&pred, &truth).unwrap();
    let st = top1_static(&pred, &table, &truth).unwrap();
    let msg = format!("cluster accuracy {ca:.1}, static top-1 {st:.1}");
    check(ca == 100.0 && st == 0.0, msg.clone(), msg)
}

fn ordering_property() -> Outcome {
    let mut rng = seeded(3);
    let mut violations = 0;
    for _ in 0..1000 {
        let classes = rng.random_range(2..10);
        let n = rng.random_range(1..200);
        let mut ids: Vec<usize> = (0..classes).collect();
        ids.shuffle(&mut rng);
        let mut table = EncodingTable::new();
        table.append(&ids.iter().enumerate().map(|(u, &c)| (u, c)).collect::<Vec<_>>()).unwrap();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        // Mostly correct predictions with random confusions.
        let pred: Vec<usize> = truth
            .iter()
            .map(|&c| {
                if rng.random_bool(0.6) {
                    ids.iter().position(|&x| x == c).unwrap()
                } else {
                    rng.random_range(0..classes)
                }
            })
            .collect();
        let st = top1_static(&pred, &table, &truth).unwrap();
        let ca = cluster_accuracy(&pred, &truth).unwrap();
        if ca + 1e-9 < st {
            violations += 1;
        }
    }
    let msg = format!("{violations} violations in 1000 pairs");
    check(violations == 0, msg.clone(), msg)
}

fn hungarian_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(4);
    let mut mismatches = 0;
    for i in 0..500 {
        let r = rng.random_range(1..=7);
        let c = rng.random_range(1..=7);
        let m = if i % 2 == 0 {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-10.0..10.0))
        } else {
            Array2::from_shape_fn((r, c), |_| f64::from(rng.random_range(0u8..4)))
        };
        let maximize = i % 3 == 0;
        let obj = if maximize { Objective::Maximize } else { Objective::Minimize };
        let got = assignment_cost(&m, &hungarian(&m, obj).unwrap());
        if (got - common::brute_force_best(&m, maximize)).abs() > 1e-9 {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("{mismatches} mismatches on 500 matrices in {secs:.2}s");
    check(mismatches == 0 && secs < 10.0, msg.clone(), msg)
}

fn confidence_properties() -> Outcome {
    let mut rng = seeded(5);
    let mut max_dev = 0.0f64;
    let mut bounds_ok = true;
    for _ in 0..100 {
        let n = rng.random_range(2..30);
        let k = rng.random_range(2..8);
        let d = Array2::from_shape_fn((n, k), |_| rng.random_range(0.0..10.0));
        let (c, _) = confidence_scores(&d).unwrap();
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let (cs, _) = confidence_scores(&d.mapv(|v| v * scale)).unwrap();
        bounds_ok &= c.iter().all(|&v| v >= 1.0 / k as f64 - 1e-12 && v <= 1.0 + 1e-12);
        max_dev = c.iter().zip(&cs).fold(max_dev, |m, (a, b)| m.max((a - b).abs()));
    }
    let mut full_selection = true;
    for k in [2usize, 3, 5] {
        let x = Array2::from_shape_fn((40, 3), |_| rng.random_range(-1.0..1.0));
        let pl = generate_pseudo_labels(&x, k, 1.0 / k as f64, KMeansConfig::default(), &mut rng).unwrap();
        full_selection &= pl.selected_fraction() == 1.0;
    }
    let (eq, _) = confidence_scores(&ndarray::array![[3.0, 3.0, 3.0, 3.0], [0.1, 2.0, 5.0, 1.0]]).unwrap();
    let equidistant = eq[0] == 0.25;
    let msg = format!(
        "bounds {bounds_ok}, scale deviation {max_dev:.2e}, full selection at alpha=1/k {full_selection}, equidistant c={}", eq[0]
    );
    check(bounds_ok && max_dev < 1e-9 && full_selection && equidistant, msg.clone(), msg)
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let spec = NetworkSpec::new(6, vec![8, 7], 5);
    let mut rng = seeded(6);
    let x = Array2::from_shape_fn((8, 6), |_| rng.random_range(-1.0..1.0));
    let old = Model::new(spec.clone(), 3, &mut seeded(7)).unwrap();
    let mut model = old.clone();
    model.grow_classifier(2, &mut seeded(8)).unwrap();
    model.layers[1].weights.mapv_inplace(|v| v * 0.9);
    let y = [0, 1, 2, 3, 4, 0, 3, 4];
    let t = one_hot(&y, 5).unwrap();
    let (xm, tm) = mixup_with(&x, &t, 0.3, &[7, 6, 5, 4, 3, 2, 1, 0]);
    let kd = LossSpec {
        old_model: Some(&old),
        distill_weight: 1.0,
        temperature: 2.0,
        ..LossSpec::default()
    };
    let ce = common::max_gradient_error(&model, &x, Targets::Hard(&y), &LossSpec::default(), 1e-4);
    let ce_kd = common::max_gradient_error(&model, &x, Targets::Hard(&y), &kd, 1e-4);
    let mix = common::max_gradient_error(&model, &xm, Targets::Soft(&tm), &LossSpec::default(), 1e-4);
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("max relative error CE {ce:.2e}, CE+KD {ce_kd:.2e}, mixup-CE {mix:.2e} in {secs:.2}s");
    check(ce < 1e-4 && ce_kd < 1e-4 && mix < 1e-4 && secs < 30.0, msg.clone(), msg)
}

fn wa_contract() -> Outcome {
    let mut model = Model::new(NetworkSpec::new(4, vec![6], 5), 6, &mut seeded(9)).unwrap();
    model.classifier.weights.slice_mut(s![3.., ..]).mapv_inplace(|v| v * 2.5);
    model.classifier.bias.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * i as f64 - 0.2);
    let before = model.clone();
    weight_align(&mut model, 3).unwrap();
    let (old, new) = block_norms(&model, 3);
    let rows_same = model.classifier.weights.slice(s![..3, ..]) == before.classifier.weights.slice(s![..3, ..])
        && model.classifier.bias.slice(s![..3]) == before.classifier.bias.slice(s![..3]);
    let mut rng = seeded(10);
    let x = Array2::from_shape_fn((100, 4), |_| rng.random_range(-3.0..3.0));
    let new_argmax = |m: &Model| argmax_rows(&m.forward(&x).unwrap().logits.slice(s![.., 3..]).to_owned());
    let invariant = new_argmax(&model) == new_argmax(&before);
    let gap = (old - new).abs();
    let msg = format!("norm gap {gap:.2e}, old rows unchanged {rows_same}, new-class argmax invariant {invariant}");
    check(gap < 1e-9 && rows_same && invariant, msg.clone(), msg)
}

fn herding_oracle() -> Outcome {
    let mut rng = seeded(11);
    let mut mismatches = 0;
    let mut first_ok = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let dim = rng.random_range(1..6);
        let x = Array2::from_shape_fn((n, dim), |_| rng.random_range(-2.0..2.0));
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let order = herding_select(&x, n).unwrap();
        if order != common::herding_oracle(&rows, n) {
            mismatches += 1;
        }
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        let nearest = (0..n)
            .min_by(|&a, &b| {
                let da = (&x.row(a) - &mean).mapv(|v| v * v).sum();
                let db = (&x.row(b) - &mean).mapv(|v| v * v).sum();
                da.total_cmp(&db)
            })
            .unwrap();
        first_ok &= order[0] == nearest;
    }
    let msg = format!("{mismatches} mismatches in 100 instances, first pick nearest mean {first_ok}");
    check(mismatches == 0 && first_ok, msg.clone(), msg)
}

fn metric_correctness() -> Outcome {
    let mut rng = seeded(12);
    let labels = |rng: &mut Rng, n: usize, k: usize| -> Vec<usize> { (0..n).map(|_| rng.random_range(0..k)).collect() };
    let mut self_ok = true;
    for _ in 0..100 {
        let u = labels(&mut rng, 30, 5);
        self_ok &= (nmi(&u, &u).unwrap() - 1.0).abs() < 1e-12 && (ari(&u, &u).unwrap() - 1.0).abs() < 1e-12;
    }
    let draws = 10_000;
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let u = labels(&mut rng, 50, 5);
            let v = labels(&mut rng, 50, 5);
            ari(&u, &v).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / draws as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0)).sqrt();
    let se = sd / (draws as f64).sqrt();
    let msg = format!("self-agreement {self_ok}, mean random ARI {mean:.5} (3 sigma = {:.5})", 3.0 * se);
    check(self_ok && mean.abs() <= 3.0 * se, msg.clone(), msg)
}

fn desk_config(seed: u64, supervised: bool) -> RunConfig {
    let mut cfg = RunConfig {
        dataset: DatasetSource::Synthetic {
            synth: SynthConfig {
                seed: seed + 1,
                ..SynthConfig::default()
            },
        },
        base_classes: 4,
        inc_classes: 2,
        supervised,
        ..RunConfig::default()
    };
    cfg.strategy.kind = StrategyKind::Wa;
    cfg.train.rng_seed = seed;
    cfg
}

fn separation_ratio(cfg: &RunConfig) -> f64 {
    let DatasetSource::Synthetic { synth } = &cfg.dataset else { unreachable!() };
    let c = synth_centers(synth);
    let mut min = f64::INFINITY;
    for i in 0..c.nrows() {
        for j in i + 1..c.nrows() {
            min = min.min((&c.row(i) - &c.row(j)).mapv(|v| v * v).sum().sqrt());
        }
    }
    min / synth.noise_std
}

/// Mean over unlabeled tasks of the first and last recorded value.
fn first_last(report: &RunReport, value: impl Fn(&icpl::evaluation::RegenerationRecord) -> f64) -> (f64, f64) {
    let tasks = report.class_partition.len();
    let (mut first, mut last, mut count) = (0.0, 0.0, 0.0);
    for t in 2..=tasks {
        let events: Vec<_> = report.metrics.task_regenerations(t).collect();
        if let (Some(a), Some(b)) = (events.first(), events.last()) {
            first += value(a);
            last += value(b);
            count += 1.0;
        }
    }
    (first / count, last / count)
}

fn desk_end_to_end() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let (mut a_ok, mut b_count, mut c_count) = (true, 0, 0);
    let mut min_sep = f64::INFINITY;
    for seed in 0..5 {
        let run = |supervised| {
            let cfg = desk_config(seed, supervised);
            let stream = prepare_stream(&cfg, Path::new("")).unwrap();
            (run_incremental(&stream, &cfg, &mut |_| Ok(())).unwrap().report, separation_ratio(&cfg))
        };
        let (unsup, sep) = run(false);
        let (sup, _) = run(true);
        min_sep = min_sep.min(sep);
        let u = unsup.metrics.final_accuracy;
        let v = sup.metrics.final_accuracy;
        let (sf0, sf1) = first_last(&unsup, |r| r.selected_fraction);
        let (n0, n1) = first_last(&unsup, |r| r.nmi);
        a_ok &= u >= 50.0;
        b_count += usize::from(v >= u);
        c_count += usize::from(sf1 >= sf0 && n1 >= n0);
        lines.push(format!(
            "seed {seed}: unsup {u:.1} sup {v:.1} selected {sf0:.3}->{sf1:.3} nmi {n0:.3}->{n1:.3}"
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    let msg = format!(
        "separation/noise {min_sep:.1}; (a) all >= 50 {a_ok}; (b) {b_count}/5; (c) {c_count}/5; {secs:.1}s\n    {}",
        lines.join("\n    ")
    );
    check(min_sep >= 10.0 && a_ok && b_count >= 4 && c_count >= 4 && secs < 300.0, msg.clone(), msg)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<u8>, String> {
        let out = dir.path().join(name);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_icpl"))
            .args(["run", "--out", out.to_str().unwrap(), "--seed", "21", "--set", "train.epochs=20"])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
    };
    let a = run("a")?;
    let b = run("b")?;
    let msg = format!("report.json {} bytes, identical {}", a.len(), a == b);
    check(a == b, msg.clone(), msg)
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("FLOPs exactness", flops_exactness),
        ("protocol pathology", protocol_pathology),
        ("cluster accuracy >= static top-1", ordering_property),
        ("Hungarian vs enumeration", hungarian_oracle),
        ("confidence properties", confidence_properties),
        ("gradient checks", gradient_checks),
        ("weight alignment contract", wa_contract),
        ("herding oracle", herding_oracle),
        ("metric correctness", metric_correctness),
        ("desk-scale end-to-end", desk_end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
