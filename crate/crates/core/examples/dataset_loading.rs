//! Write a synthetic dataset to CSV, read it back and split it into tasks.
//!
//! The same `DatasetSource` also reads IDX pairs and CIFAR-100 binaries:
//! `cargo run --example dataset_loading -- cifar train.bin test.bin`.

use std::path::PathBuf;

use icpl::dataio::{load_csv, save_csv, synth_gaussian, Split, SynthConfig};
use icpl::pipeline::{prepare_stream, DatasetSource, RunConfig};

fn main() -> icpl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::default();
    if args.len() == 3 && args[0] == "cifar" {
        cfg.dataset = DatasetSource::Cifar100 {
            train: PathBuf::from(&args[1]),
            test: PathBuf::from(&args[2]),
        };
        cfg.base_classes = 50;
        cfg.inc_classes = 10;
    } else {
        let dir = std::env::temp_dir().join("icpl-dataset-example");
        std::fs::create_dir_all(&dir).map_err(|e| icpl::Error::io(&dir, e))?;
        let (train, test) = synth_gaussian(&SynthConfig::default())?;
        save_csv(&train, &dir.join("train.csv"), "label")?;
        save_csv(&test, &dir.join("test.csv"), "label")?;
        let back = load_csv(&dir.join("train.csv"), "label", Split::Train)?;
        println!("csv roundtrip exact: {}", back == train);
        cfg.dataset = DatasetSource::Csv {
            train: dir.join("train.csv"),
            test: dir.join("test.csv"),
            label_column: "label".into(),
        };
    }
    let stream = prepare_stream(&cfg, std::path::Path::new(""))?;
    for (k, task) in stream.tasks.iter().enumerate() {
        println!(
            "task {}: classes {:?}, {} train / {} test samples",
            k + 1,
            task.classes,
            task.train.samples.nrows(),
            task.test.samples.nrows()
        );
    }
    Ok(())
}
