//! The full incremental protocol.
//!
//! Task 1 is learned with labels. For every later task the current feature
//! extractor embeds the unlabeled samples, KMeans with `k = n_inc` proposes
//! pseudo-classes, and the confidence-selected samples train freshly grown
//! classifier units together with the exemplar memory. Pseudo-labels are
//! regenerated every `τ` epochs and re-aligned to the previous clusters so
//! unit `u` keeps meaning "cluster u". When the task ends its units are
//! matched once to real classes (static encoding), the memory is refilled and
//! every seen class is evaluated.
//!
//! Ground-truth labels of a task live in [`GroundTruth`]; only the evaluation
//! and encoding steps of this module read them.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{contingency, extend_encoding, EncodingTable};
use crate::clustering::{align_clusters, generate_pseudo_labels, KMeansConfig, PseudoLabelSet};
use crate::dataio::{self, LabeledDataset, Split, Standardizer, SynthConfig};
use crate::evaluation::{ari, cluster_accuracy, nmi, top1_static, MetricsReport, RegenerationRecord};
use crate::flops::{kmeans_gflops, pseudo_label_gflops, PerSampleCost};
use crate::memory::{ClassSamples, ExemplarMemory};
use crate::nncore::{Model, NetworkSpec, TrainConfig};
use crate::rng::{derive_seed, seeded};
use crate::strategies::{run_task_training, StrategyKind, StrategySpec, TaskData};
use crate::{Error, Result};

/// Labels that training code never sees.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth(Vec<usize>);

impl GroundTruth {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    /// Access for evaluation and encoding only.
    pub fn reveal(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub samples: Array2<f64>,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct Task {
    /// Class ids `Y^k`, in unit order for labeled tasks.
    pub classes: Vec<usize>,
    pub train: TaskSplit,
    pub test: TaskSplit,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub base_classes: usize,
    pub inc_classes: usize,
    pub shuffle_seed: u64,
}

impl TaskStream {
    pub fn class_partition(&self) -> Vec<Vec<usize>> {
        self.tasks.iter().map(|t| t.classes.clone()).collect()
    }

    /// Test samples and labels of tasks `1..=tasks`, in task order.
    pub fn test_union(&self, tasks: usize) -> (Array2<f64>, Vec<usize>) {
        let tasks = tasks.min(self.tasks.len());
        let views: Vec<_> = self.tasks[..tasks].iter().map(|t| t.test.samples.view()).collect();
        let x = if views.is_empty() {
            Array2::zeros((0, self.input_dim()))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("tasks share the input width")
        };
        let y = self.tasks[..tasks]
            .iter()
            .flat_map(|t| t.test.truth.reveal().iter().copied())
            .collect();
        (x, y)
    }

    pub fn input_dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.samples.ncols())
    }
}

/// Seeded class order: classes `0..C` shuffled with ChaCha8.
pub fn class_order(class_count: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..class_count).collect();
    order.shuffle(&mut seeded(seed));
    order
}

/// Splits shuffled classes into a base task of `base` classes followed by
/// tasks of `inc` classes. With `base == 0` the first `inc` chunk is the
/// (labeled) first task.
pub fn build_stream(
    train: &LabeledDataset,
    test: &LabeledDataset,
    base: usize,
    inc: usize,
    seed: u64,
) -> Result<TaskStream> {
    let classes = train.class_count().max(test.class_count());
    if base > classes {
        return Err(Error::Argument(format!("base of {base} classes exceeds the {classes} available")));
    }
    let rest = classes - base;
    if rest > 0 && (inc == 0 || !rest.is_multiple_of(inc)) {
        return Err(Error::Argument(format!(
            "{rest} classes after the base task do not split into tasks of {inc}"
        )));
    }
    if base == 0 && rest == 0 {
        return Err(Error::Argument("stream has no classes".into()));
    }
    if train.dim() != test.dim() {
        return Err(Error::Shape(format!("train dim {} vs test dim {}", train.dim(), test.dim())));
    }
    let order = class_order(classes, seed);
    let mut sizes = Vec::new();
    if base > 0 {
        sizes.push(base);
    }
    sizes.extend(std::iter::repeat_n(inc, rest.checked_div(inc).unwrap_or(0)));
    let mut tasks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let ids = order[start..start + size].to_vec();
        start += size;
        let split = |d: &LabeledDataset| {
            let sub = d.subset(&d.indices_of(&ids));
            TaskSplit {
                samples: sub.samples,
                truth: GroundTruth(sub.labels),
            }
        };
        tasks.push(Task {
            train: split(train),
            test: split(test),
            classes: ids,
        });
    }
    Ok(TaskStream {
        tasks,
        base_classes: base,
        inc_classes: inc,
        shuffle_seed: seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        synth: SynthConfig,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Cifar100 {
        train: PathBuf,
        test: PathBuf,
    },
}

fn default_label_column() -> String {
    "label".into()
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            synth: SynthConfig::default(),
        }
    }
}

impl DatasetSource {
    /// Rewrites relative file paths as `base_dir/path`.
    pub fn resolve_paths(&mut self, base_dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        match self {
            DatasetSource::Synthetic { .. } => {}
            DatasetSource::Csv { train, test, .. } | DatasetSource::Cifar100 { train, test } => {
                fix(train);
                fix(test);
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
        }
    }

    /// Loads both splits; relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
        let p = |x: &PathBuf| base_dir.join(x);
        match self {
            DatasetSource::Synthetic { synth } => dataio::synth_gaussian(synth),
            DatasetSource::Csv { train, test, label_column } => Ok((
                dataio::load_csv(&p(train), label_column, Split::Train)?,
                dataio::load_csv(&p(test), label_column, Split::Test)?,
            )),
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => Ok((
                dataio::load_idx(&p(train_images), &p(train_labels), Split::Train)?,
                dataio::load_idx(&p(test_images), &p(test_labels), Split::Test)?,
            )),
            DatasetSource::Cifar100 { train, test } => Ok((
                dataio::load_cifar100_binary(&p(train), Split::Train)?,
                dataio::load_cifar100_binary(&p(test), Split::Test)?,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64],
            embedding_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// `None` takes the strategy's default.
    pub use_mixup: Option<bool>,
    pub use_class_weights: Option<bool>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Wa,
            use_mixup: None,
            use_class_weights: None,
        }
    }
}

impl StrategyConfig {
    pub fn resolve(&self) -> StrategySpec {
        let d = StrategySpec::new(self.kind);
        StrategySpec {
            kind: self.kind,
            use_mixup: self.use_mixup.unwrap_or(d.use_mixup),
            use_class_weights: self.use_class_weights.unwrap_or(d.use_class_weights),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Free-form label; runs sharing a name are aggregated by `report`.
    pub name: String,
    pub dataset: DatasetSource,
    pub standardize: bool,
    pub base_classes: usize,
    pub inc_classes: usize,
    pub shuffle_seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub strategy: StrategyConfig,
    /// Confidence threshold in `(0, 1)`.
    pub alpha: f64,
    /// Regeneration period in epochs; `null` computes pseudo-labels once.
    pub tau: Option<usize>,
    pub memory_budget: usize,
    pub kmeans: KMeansConfig,
    /// Train every task with its true labels (the supervised reference).
    pub supervised: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            dataset: DatasetSource::default(),
            standardize: false,
            base_classes: 4,
            inc_classes: 2,
            shuffle_seed: 1993,
            network: NetworkConfig::default(),
            train: TrainConfig::desk(),
            strategy: StrategyConfig::default(),
            alpha: 0.85,
            tau: Some(10),
            memory_budget: 2000,
            kmeans: KMeansConfig::default(),
            supervised: false,
        }
    }
}

impl RunConfig {
    /// Defaults with the 170-epoch training schedule.
    pub fn paper_profile() -> Self {
        Self {
            train: TrainConfig::paper(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.tau == Some(0) {
            return Err(Error::Config("tau must be >= 1 or null".into()));
        }
        if self.network.embedding_dim == 0 || self.network.hidden_dims.contains(&0) {
            return Err(Error::Config("network widths must be >= 1".into()));
        }
        if self.kmeans.n_init == 0 {
            return Err(Error::Config("kmeans.n_init must be >= 1".into()));
        }
        Ok(())
    }

    /// Layers JSON over the defaults, applies `key.path=value` overrides,
    /// then validates. Unknown keys anywhere are rejected.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let file: serde_json::Value = serde_json::from_str(text)?;
        let mut value = serde_json::to_value(Self::default())?;
        merge(&mut value, file);
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, overrides)
    }

    /// Event count per unlabeled task: `1 + ⌊(epochs − 1)/τ⌋`, or 1 without `τ`.
    pub fn regenerations_per_task(&self) -> usize {
        match self.tau {
            Some(t) if self.train.epochs > 0 => 1 + (self.train.epochs - 1) / t,
            _ => 1,
        }
    }
}

/// Recursive object merge. A tagged object whose `kind` differs from the
/// base replaces it wholesale.
fn merge(base: &mut serde_json::Value, top: serde_json::Value) {
    use serde_json::Value;
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let same_kind = match (b.get("kind"), t.get("kind")) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            };
            if !same_kind {
                *b = t;
                return;
            }
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, top) => *slot = top,
    }
}

/// Sets a dotted path in a JSON object. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("empty segment in override key {key:?}")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?}: {part:?} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split yields at least one segment")
}

/// Estimated arithmetic of the run from the network's per-sample cost.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComputeEstimate {
    pub training_gflops: f64,
    pub pseudo_label_gflops: f64,
}

pub const REPORT_FORMAT: &str = "icpl-report";
pub const REPORT_VERSION: u32 = 1;

/// Canonical `report.json`. Contains no wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub supervised: bool,
    pub strategy: StrategySpec,
    pub class_partition: Vec<Vec<usize>>,
    pub metrics: MetricsReport,
    pub compute: ComputeEstimate,
    pub config: RunConfig,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: RunReport = serde_json::from_str(&text)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::Consistency(format!("{}: unsupported report {} v{}", path.display(), r.format, r.version)));
        }
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// What a finished task exposes to checkpoint writers.
pub struct TaskState<'a> {
    pub task: usize,
    pub model: &'a Model,
    pub memory: &'a ExemplarMemory,
    pub encoding: &'a EncodingTable,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub model: Model,
    pub memory: ExemplarMemory,
    pub encoding: EncodingTable,
}

/// A run that stopped early, with whatever model state existed.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub task: usize,
    pub model: Option<Model>,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted in task {}: {}", self.task, self.error)
    }
}

impl std::error::Error for Aborted {}

/// Loads the configured dataset (optionally standardized) and splits it.
pub fn prepare_stream(cfg: &RunConfig, base_dir: &Path) -> Result<TaskStream> {
    let (mut train, mut test) = cfg.dataset.load(base_dir)?;
    if cfg.standardize {
        let s = Standardizer::fit(&train.samples)?;
        train.samples = s.apply(&train.samples);
        test.samples = s.apply(&test.samples);
    }
    build_stream(&train, &test, cfg.base_classes, cfg.inc_classes, cfg.shuffle_seed)
}

fn selected_task_data(samples: &Array2<f64>, pl: &PseudoLabelSet, first_unit: usize) -> Result<TaskData> {
    let idx = pl.selected_indices();
    TaskData::new(
        samples.select(Axis(0), &idx),
        idx.iter().map(|&i| first_unit + pl.pseudo_labels[i]).collect(),
    )
}

fn regeneration_record(task: usize, epoch: usize, pl: &PseudoLabelSet, truth: &GroundTruth) -> Result<RegenerationRecord> {
    let idx = pl.selected_indices();
    let (nmi_v, ari_v) = if idx.len() >= 2 {
        let pred: Vec<usize> = idx.iter().map(|&i| pl.pseudo_labels[i]).collect();
        let real: Vec<usize> = idx.iter().map(|&i| truth.reveal()[i]).collect();
        (nmi(&pred, &real)?, ari(&pred, &real)?)
    } else {
        (0.0, 0.0)
    };
    Ok(RegenerationRecord {
        task: task + 1,
        epoch,
        selected_fraction: pl.selected_fraction(),
        nmi: nmi_v,
        ari: ari_v,
    })
}

fn abort(task: usize, model: Option<&Model>, error: Error) -> Box<Aborted> {
    Box::new(Aborted {
        error,
        task,
        model: model.cloned(),
    })
}

/// Runs every task of `stream`. `on_task_end` is called after each task's
/// evaluation, typically to write checkpoints.
pub fn run_incremental(
    stream: &TaskStream,
    cfg: &RunConfig,
    on_task_end: &mut dyn FnMut(&TaskState<'_>) -> Result<()>,
) -> std::result::Result<RunOutcome, Box<Aborted>> {
    cfg.validate().map_err(|e| abort(0, None, e))?;
    if stream.tasks.is_empty() {
        return Err(abort(0, None, Error::Argument("empty task stream".into())));
    }
    let seed = cfg.train.rng_seed;
    let spec = NetworkSpec::new(stream.input_dim(), cfg.network.hidden_dims.clone(), cfg.network.embedding_dim);
    let strategy = cfg.strategy.resolve();
    let mut model = Model::new(spec, 0, &mut seeded(derive_seed(seed, 0))).map_err(|e| abort(0, None, e))?;
    let mut memory = ExemplarMemory::new(cfg.memory_budget);
    let mut encoding = EncodingTable::new();
    let mut per_task_top1 = Vec::new();
    let mut per_task_cluster = Vec::new();
    let mut regenerations = Vec::new();
    let mut compute = ComputeEstimate::default();

    for (k, task) in stream.tasks.iter().enumerate() {
        let result = run_one_task(
            k,
            task,
            cfg,
            &strategy,
            &mut model,
            &mut memory,
            &mut encoding,
            &mut regenerations,
            &mut compute,
        )
        .and_then(|()| {
            let (x, truth) = stream.test_union(k + 1);
            if truth.is_empty() {
                return Err(Error::Argument(format!("task {} has no test samples", k + 1)));
            }
            let pred = model.predict(&x)?;
            per_task_top1.push(top1_static(&pred, &encoding, &truth)?);
            per_task_cluster.push(cluster_accuracy(&pred, &truth)?);
            log::info!(
                "task {}: top1 {:.2} cluster acc {:.2}",
                k + 1,
                per_task_top1[k],
                per_task_cluster[k]
            );
            on_task_end(&TaskState {
                task: k + 1,
                model: &model,
                memory: &memory,
                encoding: &encoding,
            })
        });
        result.map_err(|e| abort(k + 1, Some(&model), e))?;
    }

    let metrics = MetricsReport::new(per_task_top1, per_task_cluster, regenerations)
        .map_err(|e| abort(stream.tasks.len(), Some(&model), e))?;
    let report = RunReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        name: cfg.name.clone(),
        supervised: cfg.supervised,
        strategy,
        class_partition: stream.class_partition(),
        metrics,
        compute,
        config: cfg.clone(),
    };
    Ok(RunOutcome {
        report,
        model,
        memory,
        encoding,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_one_task(
    k: usize,
    task: &Task,
    cfg: &RunConfig,
    strategy: &StrategySpec,
    model: &mut Model,
    memory: &mut ExemplarMemory,
    encoding: &mut EncodingTable,
    regenerations: &mut Vec<RegenerationRecord>,
    compute: &mut ComputeEstimate,
) -> Result<()> {
    let seed = cfg.train.rng_seed;
    let old_units = model.out_units();
    let n_new = task.classes.len();
    let new_units: Vec<usize> = (old_units..old_units + n_new).collect();
    let labeled = k == 0 || cfg.supervised;
    let samples = &task.train.samples;
    if samples.nrows() == 0 {
        return Err(Error::Argument(format!("task {} has no training samples", k + 1)));
    }
    let mut train_rng = seeded(derive_seed(seed, 1000 + k as u64));
    let mut cluster_rng = seeded(derive_seed(seed, 2000 + k as u64));

    let (task_data, mut current) = if labeled {
        let pos: std::collections::BTreeMap<usize, usize> =
            task.classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let labels = task.train.truth.reveal().iter().map(|c| old_units + pos[c]).collect();
        (TaskData::new(samples.clone(), labels)?, None)
    } else {
        let pl = pseudo_labels(model, samples, n_new, cfg, &mut cluster_rng, compute)?;
        regenerations.push(regeneration_record(k, 0, &pl, &task.train.truth)?);
        (selected_task_data(samples, &pl, old_units)?, Some(pl))
    };

    model.grow_classifier(n_new, &mut seeded(derive_seed(seed, 3000 + k as u64)))?;

    let per_sample = PerSampleCost::of(model);
    let mut trained = (task_data.labels.len() + memory.len()) as f64;
    let tau = cfg.tau.filter(|_| !labeled);
    let mut hook = |epoch: usize, m: &Model| -> Result<Option<TaskData>> {
        let Some(t) = tau else {
            return Ok(None);
        };
        if epoch == 0 || !epoch.is_multiple_of(t) {
            return Ok(None);
        }
        let prev = current.as_ref().expect("unlabeled tasks start with pseudo-labels");
        let mut next = pseudo_labels(m, samples, n_new, cfg, &mut cluster_rng, compute)?;
        let perm = align_clusters(&prev.clustering.centers, &next.clustering.centers)?;
        next.relabel(&perm);
        regenerations.push(regeneration_record(k, epoch, &next, &task.train.truth)?);
        let data = selected_task_data(samples, &next, old_units)?;
        current = Some(next);
        Ok(Some(data))
    };
    let summary = run_task_training(
        model,
        task_data,
        memory,
        strategy,
        &cfg.train,
        old_units,
        &mut train_rng,
        &mut hook,
    )?;
    trained *= summary.epoch_losses.len() as f64;
    compute.training_gflops += trained * per_sample.training_gflops;

    // Static encoding and memory from the final assignment.
    let embeddings = model.embed(samples)?;
    let mut admit = Vec::with_capacity(n_new);
    match &current {
        None => {
            encoding.append_identity(&new_units, &task.classes)?;
            let labels: Vec<usize> = task.train.truth.reveal().to_vec();
            for (u, &class) in new_units.iter().zip(&task.classes) {
                let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
                admit.push(class_samples(*u, samples, &embeddings, &idx));
            }
        }
        Some(pl) => {
            let assigned: Vec<usize> = pl.pseudo_labels.iter().map(|l| old_units + l).collect();
            let counts = contingency(&assigned, task.train.truth.reveal(), &new_units, &task.classes)?;
            extend_encoding(encoding, &counts, &new_units, &task.classes)?;
            for (j, &u) in new_units.iter().enumerate() {
                let idx: Vec<usize> = (0..pl.pseudo_labels.len())
                    .filter(|&i| pl.selected[i] && pl.pseudo_labels[i] == j)
                    .collect();
                admit.push(class_samples(u, samples, &embeddings, &idx));
            }
        }
    }
    memory.rebalance(admit)?;
    Ok(())
}

fn class_samples(unit: usize, samples: &Array2<f64>, embeddings: &Array2<f64>, idx: &[usize]) -> ClassSamples {
    ClassSamples {
        class: unit,
        samples: samples.select(Axis(0), idx),
        embeddings: embeddings.select(Axis(0), idx),
    }
}

fn pseudo_labels(
    model: &Model,
    samples: &Array2<f64>,
    k: usize,
    cfg: &RunConfig,
    rng: &mut crate::rng::Rng,
    compute: &mut ComputeEstimate,
) -> Result<PseudoLabelSet> {
    let embeddings = model.embed(samples)?;
    let pl = generate_pseudo_labels(&embeddings, k, cfg.alpha, cfg.kmeans, rng)?;
    let n = samples.nrows() as f64;
    let km = kmeans_gflops(
        pl.clustering.iterations_run as f64,
        n,
        model.embedding_dim() as f64,
        k as f64,
    );
    compute.pseudo_label_gflops += pseudo_label_gflops(PerSampleCost::of(model).inference_gflops, n, km);
    Ok(pl)
}

/// Writes `report.json`, `curve.csv`, `encoding.json`, `model.json` and
/// `memory.json` into `out_dir`.
pub fn write_artifacts(out_dir: &Path, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let report = out_dir.join("report.json");
    std::fs::write(&report, outcome.report.to_json()?).map_err(|e| Error::io(&report, e))?;
    outcome.report.metrics.write_curve_csv(&out_dir.join("curve.csv"))?;
    outcome.encoding.save(&out_dir.join("encoding.json"))?;
    crate::nncore::save_model(&outcome.model, &out_dir.join("model.json"))?;
    outcome.memory.save(&out_dir.join("memory.json"))?;
    let config = out_dir.join("config.json");
    std::fs::write(&config, serde_json::to_string_pretty(&outcome.report.config)? + "\n")
        .map_err(|e| Error::io(&config, e))
}

/// Checkpoint writer for [`run_incremental`]: `checkpoints/task_<k>.{model,memory,encoding}.json`.
pub fn checkpoint_writer(out_dir: &Path) -> impl FnMut(&TaskState<'_>) -> Result<()> + '_ {
    move |state| {
        let dir = out_dir.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stem = format!("task_{}", state.task);
        crate::nncore::save_model(state.model, &dir.join(format!("{stem}.model.json")))?;
        state.memory.save(&dir.join(format!("{stem}.memory.json")))?;
        state.encoding.save(&dir.join(format!("{stem}.encoding.json")))
    }
}
