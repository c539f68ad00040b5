//! JSON model checkpoints.
//!
//! ```json
//! { "format": "icpl-model", "version": 1,
//!   "spec": { "input_dim": 16, "hidden_dims": [64], "embedding_dim": 32, "activation": "relu" },
//!   "layers": [ { "inputs": 16, "outputs": 64, "weights": [...], "bias": [...] }, ... ],
//!   "classifier": { "inputs": 32, "outputs": 10, "weights": [...], "bias": [...] } }
//! ```
//!
//! `weights` is the `outputs × inputs` matrix flattened row-major. Floats are
//! written in shortest round-trip form, so a save/load cycle is bit-exact.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, Model, NetworkSpec};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "icpl-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub layers: Vec<LayerRecord>,
    pub classifier: LayerRecord,
}

impl From<&Dense> for LayerRecord {
    fn from(d: &Dense) -> Self {
        Self {
            inputs: d.inputs(),
            outputs: d.outputs(),
            weights: d.weights.iter().copied().collect(),
            bias: d.bias.to_vec(),
        }
    }
}

impl LayerRecord {
    fn into_dense(self) -> Result<Dense> {
        let weights = Array2::from_shape_vec((self.outputs, self.inputs), self.weights)
            .map_err(|e| Error::Shape(format!("checkpoint layer: {e}")))?;
        if self.bias.len() != self.outputs {
            return Err(Error::Shape(format!(
                "checkpoint layer has {} biases for {} outputs",
                self.bias.len(),
                self.outputs
            )));
        }
        Ok(Dense {
            weights,
            bias: Array1::from(self.bias),
        })
    }
}

impl From<&Model> for ModelCheckpoint {
    fn from(m: &Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: m.spec.clone(),
            layers: m.layers.iter().map(LayerRecord::from).collect(),
            classifier: LayerRecord::from(&m.classifier),
        }
    }
}

impl TryFrom<ModelCheckpoint> for Model {
    type Error = Error;

    fn try_from(c: ModelCheckpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Consistency(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        c.spec.validate()?;
        let layers = c
            .layers
            .into_iter()
            .map(LayerRecord::into_dense)
            .collect::<Result<Vec<_>>>()?;
        let classifier = c.classifier.into_dense()?;
        let widths = c.spec.widths();
        let chained = layers.len() + 1 == widths.len()
            && layers
                .iter()
                .zip(widths.windows(2))
                .all(|(l, w)| l.inputs() == w[0] && l.outputs() == w[1])
            && classifier.inputs() == c.spec.embedding_dim;
        if !chained {
            return Err(Error::Shape("checkpoint layers do not match its spec".into()));
        }
        Ok(Model {
            spec: c.spec,
            layers,
            classifier,
        })
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&ModelCheckpoint::from(model))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: ModelCheckpoint = serde_json::from_str(&text)?;
    Model::try_from(ckpt)
}
