//! Feed-forward feature extractor with a growable linear classifier.
//!
//! The extractor is a stack of dense ReLU layers ending at `embedding_dim`;
//! the classifier maps embeddings to one logit per class seen so far. All
//! arithmetic is `f64` so gradients can be checked against finite differences.

mod augment;
mod checkpoint;
mod loss;
mod optim;

pub use augment::{class_weights, gaussian_noise, mixup, mixup_with, one_hot};
pub use checkpoint::{load_model, save_model, ModelCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::{cross_entropy, distillation, loss_and_grad, softmax_rows, LossSpec, Targets};
pub use optim::{train_step, Sgd, TrainConfig};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, embedding_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            embedding_dim,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Argument(format!(
                "network dimensions must all be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Layer widths from input to embedding, inclusive.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.embedding_dim);
        w
    }
}

/// A dense layer computing `x · Wᵀ + b`, with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// He-scaled uniform weights in `±sqrt(6 / fan_in)`, zero bias.
    pub fn he_uniform(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-bound..bound));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weights.t());
        out += &self.bias;
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
    pub classifier: Dense,
}

/// Embeddings and logits of one batch.
#[derive(Debug, Clone)]
pub struct Forward {
    pub embeddings: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Every intermediate the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` is the output of layer `l`.
    pub activations: Vec<Array2<f64>>,
    pub pre_activations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

/// Parameter-shaped gradient (or momentum) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
    pub classifier: Dense,
}

impl Grads {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
            classifier: Dense::zeros(model.classifier.inputs(), model.classifier.outputs()),
        }
    }

    pub fn matches(&self, model: &Model) -> bool {
        self.layers.len() == model.layers.len()
            && self
                .layers
                .iter()
                .zip(&model.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim())
            && self.classifier.weights.dim() == model.classifier.weights.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .chain(std::iter::once(&self.classifier))
            .all(|d| d.weights.iter().chain(d.bias.iter()).all(|v| v.is_finite()))
    }
}

impl Model {
    /// Builds a freshly initialized model with `classes` output units.
    pub fn new(spec: NetworkSpec, classes: usize, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|w| Dense::he_uniform(w[0], w[1], rng))
            .collect();
        let classifier = Dense::he_uniform(spec.embedding_dim, classes, rng);
        Ok(Self {
            spec,
            layers,
            classifier,
        })
    }

    pub fn out_units(&self) -> usize {
        self.classifier.outputs()
    }

    pub fn embedding_dim(&self) -> usize {
        self.spec.embedding_dim
    }

    pub fn forward(&self, batch: &Array2<f64>) -> Result<Forward> {
        let trace = self.trace(batch)?;
        let Trace {
            mut activations,
            logits,
            ..
        } = trace;
        Ok(Forward {
            embeddings: activations.pop().expect("at least one layer"),
            logits,
        })
    }

    pub fn embed(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers {
            a = layer.apply(&a.view()).mapv_into(relu);
        }
        Ok(a)
    }

    /// Argmax over logits, lowest unit id on ties.
    pub fn predict(&self, batch: &Array2<f64>) -> Result<Vec<usize>> {
        let out = self.forward(batch)?;
        Ok(argmax_rows(&out.logits))
    }

    pub(crate) fn trace(&self, batch: &Array2<f64>) -> Result<Trace> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let h = layer.apply(&activations.last().expect("input pushed").view());
            activations.push(h.mapv(relu));
            pre_activations.push(h);
        }
        let logits = self
            .classifier
            .apply(&activations.last().expect("input pushed").view());
        Ok(Trace {
            activations,
            pre_activations,
            logits,
        })
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Appends `new_classes` freshly initialized classifier rows. Existing rows
    /// are copied verbatim.
    pub fn grow_classifier(&mut self, new_classes: usize, rng: &mut Rng) -> Result<()> {
        if new_classes == 0 {
            return Err(Error::Argument("cannot grow classifier by 0 units".into()));
        }
        let d = self.spec.embedding_dim;
        let old = self.out_units();
        let fresh = Dense::he_uniform(d, new_classes, rng);
        let mut weights = Array2::zeros((old + new_classes, d));
        weights.slice_mut(s![..old, ..]).assign(&self.classifier.weights);
        weights.slice_mut(s![old.., ..]).assign(&fresh.weights);
        let mut bias = Array1::zeros(old + new_classes);
        bias.slice_mut(s![..old]).assign(&self.classifier.bias);
        self.classifier = Dense { weights, bias };
        Ok(())
    }

    /// Multiply-accumulate count of one forward pass per sample.
    pub fn forward_macs(&self) -> u64 {
        self.layers
            .iter()
            .chain(std::iter::once(&self.classifier))
            .map(|l| (l.inputs() * l.outputs()) as u64)
            .sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .chain(std::iter::once(&self.classifier))
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub(crate) fn backward(&self, trace: &Trace, d_logits: &Array2<f64>) -> Grads {
        let embeddings = trace.activations.last().expect("input pushed");
        let classifier = Dense {
            weights: d_logits.t().dot(embeddings),
            bias: d_logits.sum_axis(Axis(0)),
        };
        let mut upstream = d_logits.dot(&self.classifier.weights);
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &trace.pre_activations[l];
            ndarray::Zip::from(&mut upstream)
                .and(pre)
                .for_each(|g, &h| {
                    if h <= 0.0 {
                        *g = 0.0
                    }
                });
            let input = &trace.activations[l];
            layers.push(Dense {
                weights: upstream.t().dot(input),
                bias: upstream.sum_axis(Axis(0)),
            });
            if l > 0 {
                upstream = upstream.dot(&layer.weights);
            }
        }
        layers.reverse();
        Grads { layers, classifier }
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn toy(spec: NetworkSpec, classes: usize, seed: u64) -> Model {
        Model::new(spec, classes, &mut seeded(seed)).unwrap()
    }

    #[test]
    fn zero_weights_give_bias_logits() {
        let mut m = toy(NetworkSpec::new(3, vec![4], 2), 3, 1);
        for l in &mut m.layers {
            l.weights.fill(0.0);
        }
        m.classifier.weights.fill(0.0);
        m.classifier.bias = array![0.5, -1.0, 2.0];
        let out = m.forward(&array![[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]).unwrap();
        for row in out.logits.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn relu_clips_negative_embedding() {
        let mut m = toy(NetworkSpec::new(2, vec![], 2), 1, 2);
        m.layers[0].weights = Array2::eye(2);
        m.layers[0].bias.fill(0.0);
        let out = m.forward(&array![[-1.0, 2.0]]).unwrap();
        assert_eq!(out.embeddings, array![[0.0, 2.0]]);
    }

    #[test]
    fn forward_matches_naive_loops() {
        let m = toy(NetworkSpec::new(4, vec![6, 5], 3), 4, 7);
        let batch = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64 * 0.3 - j as f64 * 0.7).sin());
        let out = m.forward(&batch).unwrap();
        for (i, x) in batch.rows().into_iter().enumerate() {
            let mut a: Vec<f64> = x.to_vec();
            for layer in &m.layers {
                let mut next = vec![0.0; layer.outputs()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = layer.bias[o];
                    for (k, v) in a.iter().enumerate() {
                        acc += layer.weights[[o, k]] * v;
                    }
                    *slot = acc.max(0.0);
                }
                a = next;
            }
            for c in 0..m.out_units() {
                let mut z = m.classifier.bias[c];
                for (k, v) in a.iter().enumerate() {
                    z += m.classifier.weights[[c, k]] * v;
                }
                assert!((z - out.logits[[i, c]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let m = toy(NetworkSpec::new(3, vec![], 2), 2, 0);
        assert!(matches!(m.forward(&Array2::zeros((2, 4))), Err(Error::Shape(_))));
    }

    #[test]
    fn grow_keeps_old_logits_bitwise() {
        let mut m = toy(NetworkSpec::new(5, vec![8], 4), 10, 3);
        let batch = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 5 + j) as f64).cos());
        let before = m.forward(&batch).unwrap().logits;
        m.grow_classifier(2, &mut seeded(99)).unwrap();
        let after = m.forward(&batch).unwrap().logits;
        assert_eq!(after.ncols(), 12);
        for i in 0..7 {
            for c in 0..10 {
                assert_eq!(before[[i, c]].to_bits(), after[[i, c]].to_bits());
            }
        }
    }

    #[test]
    fn grow_by_zero_rejected_and_growth_is_additive() {
        let mut a = toy(NetworkSpec::new(2, vec![], 2), 1, 0);
        assert!(matches!(a.grow_classifier(0, &mut seeded(0)), Err(Error::Argument(_))));
        let mut b = a.clone();
        a.grow_classifier(2, &mut seeded(1)).unwrap();
        a.grow_classifier(3, &mut seeded(2)).unwrap();
        b.grow_classifier(5, &mut seeded(3)).unwrap();
        assert_eq!(a.classifier.weights.dim(), b.classifier.weights.dim());
        assert_eq!(a.out_units(), 6);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = NetworkSpec::new(3, vec![0], 2);
        assert!(Model::new(spec, 2, &mut seeded(0)).is_err());
    }
}
