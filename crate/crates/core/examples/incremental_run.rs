//! End-to-end incremental run on synthetic Gaussian classes.
//!
//! `cargo run --release --example incremental_run -- [strategy] [seed]`
//! where strategy is `wa`, `icarl` or `replay`.

use icpl::pipeline::{prepare_stream, run_incremental, RunConfig};
use icpl::strategies::StrategyKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let kind = match args.next().as_deref() {
        Some("icarl") => StrategyKind::Icarl,
        Some("replay") => StrategyKind::Replay,
        _ => StrategyKind::Wa,
    };
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let mut cfg = RunConfig::default();
    cfg.strategy.kind = kind;
    cfg.train.rng_seed = seed;
    let stream = prepare_stream(&cfg, std::path::Path::new("."))?;
    let outcome = run_incremental(&stream, &cfg, &mut |_| Ok(()))?;
    let m = &outcome.report.metrics;

    println!("classes per task: {:?}", outcome.report.class_partition);
    println!("{:>5} {:>8} {:>12}", "task", "top1", "cluster_acc");
    for (k, (a, c)) in m.per_task_top1.iter().zip(&m.cluster_accuracy).enumerate() {
        println!("{:>5} {:>8.2} {:>12.2}", k + 1, a, c);
    }
    for r in &m.regenerations {
        println!(
            "task {} epoch {:>2}: selected {:.3} nmi {:.3} ari {:.3}",
            r.task, r.epoch, r.selected_fraction, r.nmi, r.ari
        );
    }
    println!("final {:.2} average {:.2}", m.final_accuracy, m.average_accuracy);
    Ok(())
}
