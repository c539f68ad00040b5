//! Dataset ingestion and synthesis.
//!
//! Images from IDX and CIFAR-100 files are flattened to feature vectors with
//! pixels scaled to `[0, 1]`. Every loader reports malformed input with a
//! line number or byte offset instead of panicking.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Option<Vec<String>>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(samples: Array2<f64>, labels: Vec<usize>, split: Split) -> Result<Self> {
        if samples.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                samples.nrows(),
                labels.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("dataset contains non-finite features".into()));
        }
        Ok(Self {
            samples,
            labels,
            class_names: None,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// `1 + max label`, or 0 when empty.
    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Rows whose label is in `classes`, in dataset order.
    pub fn indices_of(&self, classes: &[usize]) -> Vec<usize> {
        let wanted: std::collections::BTreeSet<_> = classes.iter().collect();
        (0..self.len()).filter(|&i| wanted.contains(&self.labels[i])).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            samples: self.samples.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            split: self.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub center_scale: f64,
    pub noise_std: f64,
    /// Held-out fraction per class.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            per_class: 100,
            dim: 16,
            center_scale: 1.0,
            noise_std: 0.1,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

/// Class centers drawn uniformly from `[−center_scale, center_scale]^dim`.
pub fn synth_centers(cfg: &SynthConfig) -> Array2<f64> {
    let mut rng = seeded(derive_seed(cfg.seed, 1));
    let s = cfg.center_scale;
    Array2::from_shape_fn((cfg.num_classes, cfg.dim), |_| rng.random_range(-s..=s))
}

/// Gaussian mixture with a stratified train/test split.
pub fn synth_gaussian(cfg: &SynthConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    if cfg.num_classes == 0 || cfg.per_class == 0 || cfg.dim == 0 {
        return Err(Error::Argument("synthetic dataset sizes must be >= 1".into()));
    }
    if !(cfg.center_scale > 0.0) || !(cfg.noise_std >= 0.0) {
        return Err(Error::Argument("center_scale must be > 0 and noise_std >= 0".into()));
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(Error::Argument("test_fraction must lie in [0, 1)".into()));
    }
    let centers = synth_centers(cfg);
    let mut rng = seeded(derive_seed(cfg.seed, 2));
    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE)).expect("valid stddev");
    let n_test = (cfg.per_class as f64 * cfg.test_fraction).round() as usize;
    let n_train = cfg.per_class - n_test;
    let mut parts: [(Vec<f64>, Vec<usize>); 2] = Default::default();
    for c in 0..cfg.num_classes {
        for i in 0..cfg.per_class {
            let part = &mut parts[usize::from(i >= n_train)];
            for j in 0..cfg.dim {
                let eps = if cfg.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                part.0.push(centers[[c, j]] + eps);
            }
            part.1.push(c);
        }
    }
    let [(train_x, train_y), (test_x, test_y)] = parts;
    let build = |x: Vec<f64>, y: Vec<usize>, split| {
        let rows = y.len();
        LabeledDataset::new(
            Array2::from_shape_vec((rows, cfg.dim), x).expect("rows × dim values"),
            y,
            split,
        )
    };
    Ok((build(train_x, train_y, Split::Train)?, build(test_x, test_y, Split::Test)?))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => parse_error(
            path,
            line,
            format!("row has {len} fields, header has {expected_len}"),
        ),
        other => parse_error(path, line, format!("{other:?}")),
    }
}

/// Reads a comma-separated table with a header row. `label_column` holds
/// integer class ids; every other column is a feature.
pub fn load_csv(path: &Path, label_column: &str, split: Split) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| parse_error(path, 1, format!("no column named {label_column:?}")))?;
    let dim = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == label_idx {
                let label = field
                    .parse::<usize>()
                    .map_err(|_| parse_error(path, line, format!("label {field:?} is not a class id")))?;
                labels.push(label);
            } else {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("{field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_error(path, line, format!("non-finite value {field:?}")));
                }
                data.push(v);
            }
        }
    }
    let samples = Array2::from_shape_vec((labels.len(), dim), data)
        .map_err(|e| parse_error(path, 0, e.to_string()))?;
    LabeledDataset::new(samples, labels, split)
}

/// Writes `f0..f{d-1}` feature columns followed by `label_column`.
pub fn save_csv(dataset: &LabeledDataset, path: &Path, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|j| format!("f{j}")).collect();
    header.push(label_column.to_string());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (row, label) in dataset.samples.rows().into_iter().zip(&dataset.labels) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(label.to_string());
        w.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: PathBuf::from(path),
        offset: offset as u64,
        message: message.into(),
    }
}

pub const CIFAR_RECORD_BYTES: usize = 2 + 3 * 32 * 32;

/// CIFAR-100 binary: per record one coarse-label byte, one fine-label byte,
/// then 3072 pixel bytes (R, G, B planes, row-major). Fine labels are kept.
pub fn load_cifar100_binary(path: &Path, split: Split) -> Result<LabeledDataset> {
    let bytes = read_bytes(path)?;
    parse_cifar100(&bytes, path, split)
}

fn parse_cifar100(bytes: &[u8], path: &Path, split: Split) -> Result<LabeledDataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        return Err(format_error(
            path,
            whole,
            format!(
                "{} trailing bytes; records are {CIFAR_RECORD_BYTES} bytes",
                bytes.len() - whole
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let pixels = CIFAR_RECORD_BYTES - 2;
    let mut data = Vec::with_capacity(n * pixels);
    let mut labels = Vec::with_capacity(n);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let fine = record[1];
        if fine >= 100 {
            return Err(format_error(path, r * CIFAR_RECORD_BYTES + 1, format!("fine label {fine} >= 100")));
        }
        labels.push(fine as usize);
        data.extend(record[2..].iter().map(|&p| p as f64 / 255.0));
    }
    let samples = Array2::from_shape_vec((n, pixels), data).expect("n × 3072 pixels");
    LabeledDataset::new(samples, labels, split)
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(path, offset, "unexpected end of header"))
}

/// MNIST-style IDX pair: `u8` images of rank 3 and `u8` labels of rank 1.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<LabeledDataset> {
    let img = read_bytes(images)?;
    let lab = read_bytes(labels)?;
    parse_idx(&img, images, &lab, labels, split)
}

fn parse_idx(img: &[u8], img_path: &Path, lab: &[u8], lab_path: &Path, split: Split) -> Result<LabeledDataset> {
    let magic = be_u32(img, 0, img_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(format_error(img_path, 0, format!("magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let magic = be_u32(lab, 0, lab_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(format_error(lab_path, 0, format!("magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let n = be_u32(img, 4, img_path)? as usize;
    let rows = be_u32(img, 8, img_path)? as usize;
    let cols = be_u32(img, 12, img_path)? as usize;
    let n_labels = be_u32(lab, 4, lab_path)? as usize;
    if n != n_labels {
        return Err(format_error(lab_path, 4, format!("{n_labels} labels for {n} images")));
    }
    let dim = rows * cols;
    let pixels = &img[16..];
    if pixels.len() != n * dim {
        return Err(format_error(
            img_path,
            16,
            format!("{} pixel bytes, header implies {}", pixels.len(), n * dim),
        ));
    }
    let label_bytes = &lab[8..];
    if label_bytes.len() != n {
        return Err(format_error(lab_path, 8, format!("{} label bytes for {n} images", label_bytes.len())));
    }
    let samples = Array2::from_shape_vec((n, dim), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("n × rows·cols pixels");
    LabeledDataset::new(samples, label_bytes.iter().map(|&l| l as usize).collect(), split)
}

/// Per-feature standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    /// Zero-variance features keep unit scale.
    pub fn fit(train: &Array2<f64>) -> Result<Self> {
        let mean = train
            .mean_axis(Axis(0))
            .ok_or_else(|| Error::Argument("cannot standardize an empty split".into()))?;
        let scale = train
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.scale
    }
}
