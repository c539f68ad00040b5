//! Command-line frontend behind the `icpl` binary.
//!
//! | command    | reads                         | writes |
//! |------------|-------------------------------|--------|
//! | `gen-data` | synthetic settings            | `train.csv`, `test.csv`, `config.json` |
//! | `run`      | run config                    | `report.json`, `curve.csv`, `encoding.json`, `model.json`, `memory.json`, `config.json`, `checkpoints/`, `timing.log` |
//! | `eval`     | a run directory               | nothing; prints recomputed metrics |
//! | `flops`    | cost parameters               | nothing; prints the cost table |
//! | `report`   | run directories               | `comparison.csv`; prints the table |
//!
//! Verbosity follows `ICPL_LOG` (an `env_logger` filter, default `warn`).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::assignment::EncodingTable;
use crate::dataio::{save_csv, synth_gaussian, SynthConfig};
use crate::evaluation::{cluster_accuracy, top1_static};
use crate::flops::FlopsModel;
use crate::nncore::load_model;
use crate::pipeline::{
    apply_override, checkpoint_writer, prepare_stream, run_incremental, write_artifacts, DatasetSource, RunConfig,
    RunReport,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "icpl", version, about = "Unsupervised class-incremental learning with clustering pseudo-labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded Gaussian dataset as CSV plus a matching run config.
    GenData(GenDataArgs),
    /// Run the incremental protocol.
    Run(RunArgs),
    /// Reload a finished run and recompute its metrics.
    Eval(EvalArgs),
    /// Print the training-cost table.
    Flops(FlopsArgs),
    /// Compare finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Synthetic setting, e.g. `num_classes=6` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Config override on a dotted path, e.g. `train.epochs=20` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Training seed (`train.rng_seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `run`.
    pub run_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FlopsArgs {
    #[arg(long, default_value_t = 50.0)]
    pub kmeans_iters: f64,
    /// Samples clustered per pseudo-label pass.
    #[arg(long, default_value_t = 5000.0)]
    pub samples: f64,
    #[arg(long, default_value_t = 64.0)]
    pub embed_dim: f64,
    #[arg(long, default_value_t = 10.0)]
    pub clusters: f64,
    #[arg(long, default_value_t = 0.41)]
    pub train_gflops: f64,
    #[arg(long, default_value_t = 0.1377)]
    pub inference_gflops: f64,
    #[arg(long, default_value_t = 170)]
    pub epochs: u64,
    /// Regeneration period; 0 computes pseudo-labels once.
    #[arg(long, default_value_t = 10)]
    pub tau: u64,
    #[arg(long, default_value_t = 7000.0)]
    pub n_supervised: f64,
    #[arg(long, default_value_t = 5000.0)]
    pub n_unsupervised: f64,
    /// Force a recompute count instead of the derived ones.
    #[arg(long)]
    pub recompute_count: Option<u64>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, each holding a `report.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Reference run for the degradation columns. Defaults to the first
    /// supervised run among `runs`.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Directory for `comparison.csv`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `std::env::args`, runs the command and maps failure to exit code 1.
pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ICPL_LOG", "warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match execute(cli, &mut stdout) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Flops(a) => cmd_flops(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    }
}

fn console(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let mut value = serde_json::to_value(SynthConfig::default())?;
    for s in &args.set {
        apply_override(&mut value, s)?;
    }
    let mut synth: SynthConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        synth.seed = seed;
    }
    let (train, test) = synth_gaussian(&synth)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_csv(&train, &args.out.join("train.csv"), "label")?;
    save_csv(&test, &args.out.join("test.csv"), "label")?;
    let cfg = RunConfig {
        dataset: DatasetSource::Csv {
            train: "train.csv".into(),
            test: "test.csv".into(),
            label_column: "label".into(),
        },
        ..RunConfig::default()
    };
    write_text(&args.out.join("config.json"), &(serde_json::to_string_pretty(&cfg)? + "\n"))?;
    writeln!(
        out,
        "wrote {} train and {} test samples ({} classes, dim {}) to {}",
        train.len(),
        test.len(),
        synth.num_classes,
        synth.dim,
        args.out.display()
    )
    .map_err(console)
}

/// Config from `--config` (or defaults), `--set` overrides and `--seed`.
/// Dataset paths are made relative to the config file's directory.
pub fn resolve_run_config(args: &RunArgs) -> Result<RunConfig> {
    let (text, base) = match &args.config {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => ("{}".to_string(), PathBuf::new()),
    };
    let mut cfg = RunConfig::from_json(&text, &args.set)?;
    if let Some(seed) = args.seed {
        cfg.train.rng_seed = seed;
    }
    cfg.dataset.resolve_paths(&base);
    Ok(cfg)
}

#[derive(Serialize)]
struct AbortRecord<'a> {
    task: usize,
    error: String,
    checkpoints: &'a str,
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = resolve_run_config(args)?;
    let stream = prepare_stream(&cfg, Path::new(""))?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let mut timing = String::new();
    let start = Instant::now();
    let mut last = start;
    let mut checkpoint = checkpoint_writer(&args.out);
    let mut on_task_end = |state: &crate::pipeline::TaskState<'_>| {
        let now = Instant::now();
        timing.push_str(&format!("task {} {:.3}s\n", state.task, (now - last).as_secs_f64()));
        last = now;
        checkpoint(state)
    };
    let result = run_incremental(&stream, &cfg, &mut on_task_end);
    timing.push_str(&format!("total {:.3}s\n", start.elapsed().as_secs_f64()));
    write_text(&args.out.join("timing.log"), &timing)?;

    let outcome = match result {
        Ok(o) => o,
        Err(aborted) => {
            if let Some(model) = &aborted.model {
                crate::nncore::save_model(model, &args.out.join("abort.model.json"))?;
            }
            let record = AbortRecord {
                task: aborted.task,
                error: aborted.error.to_string(),
                checkpoints: "checkpoints",
            };
            write_text(&args.out.join("abort.json"), &(serde_json::to_string_pretty(&record)? + "\n"))?;
            return Err(aborted.error);
        }
    };
    write_artifacts(&args.out, &outcome)?;
    let m = &outcome.report.metrics;
    writeln!(
        out,
        "{}: {} tasks, final top-1 {:.2}, average top-1 {:.2}, final cluster accuracy {:.2}",
        cfg.name,
        m.per_task_top1.len(),
        m.final_accuracy,
        m.average_accuracy,
        m.cluster_accuracy.last().copied().unwrap_or(0.0)
    )
    .map_err(console)
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let dir = &args.run_dir;
    let cfg = RunConfig::load(&dir.join("config.json"), &[])?;
    let model = load_model(&dir.join("model.json"))?;
    let table = EncodingTable::load(&dir.join("encoding.json"))?;
    let stream = prepare_stream(&cfg, Path::new(""))?;
    if model.embedding_dim() != cfg.network.embedding_dim || model.out_units() != table.len() {
        return Err(Error::Consistency(format!(
            "{}: model has {} units, encoding has {}",
            dir.display(),
            model.out_units(),
            table.len()
        )));
    }
    let (x, truth) = stream.test_union(stream.tasks.len());
    let pred = model.predict(&x)?;
    let top1 = top1_static(&pred, &table, &truth)?;
    let cluster = cluster_accuracy(&pred, &truth)?;
    writeln!(out, "{:<8} {:>10} {:>10}", "task", "classes", "top1").map_err(console)?;
    let mut offset = 0;
    for (k, task) in stream.tasks.iter().enumerate() {
        let n = task.test.truth.len();
        let acc = top1_static(&pred[offset..offset + n], &table, task.test.truth.reveal())?;
        offset += n;
        writeln!(out, "{:<8} {:>10} {:>10.2}", k + 1, task.classes.len(), acc).map_err(console)?;
    }
    writeln!(out, "all seen classes: top-1 {top1:.2}, cluster accuracy {cluster:.2}").map_err(console)?;
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let report = RunReport::load(&report_path)?;
        if (report.metrics.final_accuracy - top1).abs() > 1e-9 {
            return Err(Error::Consistency(format!(
                "recomputed top-1 {top1} differs from reported {}",
                report.metrics.final_accuracy
            )));
        }
        writeln!(out, "matches report.json").map_err(console)?;
    }
    Ok(())
}

pub fn cmd_flops(args: &FlopsArgs, out: &mut dyn Write) -> Result<()> {
    let model = FlopsModel {
        kmeans_iters: args.kmeans_iters,
        samples: args.samples,
        embed_dim: args.embed_dim,
        clusters: args.clusters,
        training_gflops_per_image: args.train_gflops,
        inference_gflops_per_image: args.inference_gflops,
        epochs: args.epochs,
        tau: (args.tau > 0).then_some(args.tau),
        n_supervised: args.n_supervised,
        n_unsupervised: args.n_unsupervised,
        recompute_count: args.recompute_count,
    };
    let report = model.evaluate();
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(console)
    } else {
        write!(out, "{report}").map_err(console)
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub run: String,
    pub name: String,
    pub strategy: String,
    pub supervised: bool,
    pub seed: String,
    pub final_top1: f64,
    pub average_top1: f64,
    pub final_std: Option<f64>,
    pub average_std: Option<f64>,
    pub final_cluster_acc: f64,
    /// Baseline minus this row.
    pub degradation_final: Option<f64>,
    pub degradation_average: Option<f64>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Rows for each run followed by mean ± std rows for names shared by
/// several runs. Runs must share their class partition.
pub fn compare_runs(runs: &[(String, RunReport)], baseline: Option<&RunReport>) -> Result<Vec<ComparisonRow>> {
    let Some((_, first)) = runs.first() else {
        return Err(Error::Argument("no runs to compare".into()));
    };
    for (label, r) in runs.iter().map(|(l, r)| (l.as_str(), r)).chain(baseline.map(|b| ("baseline", b))) {
        if r.class_partition != first.class_partition {
            return Err(Error::Comparison(format!(
                "{label} uses class partition {:?}, expected {:?}",
                r.class_partition, first.class_partition
            )));
        }
    }
    let baseline = baseline.or_else(|| runs.iter().map(|(_, r)| r).find(|r| r.supervised));
    let delta = |f: f64, a: f64| match baseline {
        Some(b) => (Some(b.metrics.final_accuracy - f), Some(b.metrics.average_accuracy - a)),
        None => (None, None),
    };
    let mut rows = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&RunReport>> = BTreeMap::new();
    for (label, r) in runs {
        let m = &r.metrics;
        let (df, da) = delta(m.final_accuracy, m.average_accuracy);
        rows.push(ComparisonRow {
            run: label.clone(),
            name: r.name.clone(),
            strategy: r.strategy.kind.to_string(),
            supervised: r.supervised,
            seed: r.config.train.rng_seed.to_string(),
            final_top1: m.final_accuracy,
            average_top1: m.average_accuracy,
            final_std: None,
            average_std: None,
            final_cluster_acc: m.cluster_accuracy.last().copied().unwrap_or(0.0),
            degradation_final: df,
            degradation_average: da,
        });
        groups.entry(r.name.as_str()).or_default().push(r);
    }
    for (name, members) in groups.into_iter().filter(|(_, m)| m.len() > 1) {
        let finals: Vec<f64> = members.iter().map(|r| r.metrics.final_accuracy).collect();
        let avgs: Vec<f64> = members.iter().map(|r| r.metrics.average_accuracy).collect();
        let clusters: Vec<f64> = members
            .iter()
            .map(|r| r.metrics.cluster_accuracy.last().copied().unwrap_or(0.0))
            .collect();
        let (fm, fs) = mean_std(&finals);
        let (am, as_) = mean_std(&avgs);
        let (df, da) = delta(fm, am);
        let kinds: Vec<String> = members.iter().map(|r| r.strategy.kind.to_string()).collect();
        rows.push(ComparisonRow {
            run: format!("mean of {}", members.len()),
            name: name.to_string(),
            strategy: if kinds.iter().all(|k| *k == kinds[0]) { kinds[0].clone() } else { "mixed".into() },
            supervised: members.iter().all(|r| r.supervised),
            seed: "-".into(),
            final_top1: fm,
            average_top1: am,
            final_std: Some(fs),
            average_std: Some(as_),
            final_cluster_acc: mean_std(&clusters).0,
            degradation_final: df,
            degradation_average: da,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

fn with_std(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.2} ± {s:.2}"),
        None => format!("{mean:.2}"),
    }
}

pub fn render_table(rows: &[ComparisonRow]) -> String {
    let header = ["run", "name", "strategy", "labels", "seed", "final", "average", "cluster", "Δfinal", "Δaverage"];
    let cells: Vec<[String; 10]> = rows
        .iter()
        .map(|r| {
            [
                r.run.clone(),
                r.name.clone(),
                r.strategy.clone(),
                if r.supervised { "all".into() } else { "first".into() },
                r.seed.clone(),
                with_std(r.final_top1, r.final_std),
                with_std(r.average_top1, r.average_std),
                format!("{:.2}", r.final_cluster_acc),
                opt(r.degradation_final),
                opt(r.degradation_average),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |items: Vec<&str>| {
        let mut s = String::new();
        for (i, (item, w)) in items.iter().zip(&widths).enumerate() {
            let pad = w - item.chars().count();
            if i < 5 {
                s.push_str(item);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(item);
            }
            s.push_str("  ");
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(header.to_vec());
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

pub fn write_comparison_csv(rows: &[ComparisonRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let fail = |e: csv::Error| Error::io(path, e.into());
    w.write_record([
        "run",
        "name",
        "strategy",
        "supervised",
        "seed",
        "final_top1",
        "final_top1_std",
        "average_top1",
        "average_top1_std",
        "final_cluster_acc",
        "degradation_final",
        "degradation_average",
    ])
    .map_err(fail)?;
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
    for r in rows {
        w.write_record([
            r.run.clone(),
            r.name.clone(),
            r.strategy.clone(),
            r.supervised.to_string(),
            r.seed.clone(),
            num(Some(r.final_top1)),
            num(r.final_std),
            num(Some(r.average_top1)),
            num(r.average_std),
            num(Some(r.final_cluster_acc)),
            num(r.degradation_final),
            num(r.degradation_average),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let runs = args
        .runs
        .iter()
        .map(|d| Ok((run_label(d), RunReport::load(&d.join("report.json"))?)))
        .collect::<Result<Vec<_>>>()?;
    let baseline = args
        .baseline
        .as_ref()
        .map(|d| RunReport::load(&d.join("report.json")))
        .transpose()?;
    let rows = compare_runs(&runs, baseline.as_ref())?;
    out.write_all(render_table(&rows).as_bytes()).map_err(console)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_comparison_csv(&rows, &args.out.join("comparison.csv"))
}
