use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Activation, Dense, Loss, MlpModel, ModelKind, Network, Standardizer, TrainConfig};
use crate::datagen::DatasetHeader;
use crate::error::{Error, Result};
use crate::features::FeatureMode;
use crate::ordering::factorial;

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_id: ModelKind,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub loss: Loss,
    /// Row-major `outputs x inputs` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    pub feature_mode: FeatureMode,
    pub n_nets: usize,
    #[serde(default)]
    pub config: Option<TrainConfig>,
    #[serde(default)]
    pub test_accuracy: Option<f64>,
    #[serde(default)]
    pub dataset: Option<DatasetHeader>,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel) -> Self {
        let layers = &model.network.layers;
        Self {
            format_version: CHECKPOINT_VERSION,
            model_id: model.kind,
            layer_dims: model.network.dims(),
            activations: layers.iter().map(|l| l.activation).collect(),
            loss: model.kind.loss(),
            weights: layers.iter().map(|l| l.weights.clone()).collect(),
            biases: layers.iter().map(|l| l.bias.clone()).collect(),
            standardizer: model.standardizer.clone(),
            feature_mode: model.feature_mode,
            n_nets: model.n_nets,
            config: None,
            test_accuracy: None,
            dataset: None,
        }
    }

    /// Rebuilds the model, checking that every array matches the declared
    /// shapes and the model id.
    pub fn to_model(&self) -> Result<MlpModel> {
        let bad = |msg: String| Error::Data(format!("checkpoint: {msg}"));
        if self.format_version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported format version {}", self.format_version)));
        }
        let dims = &self.layer_dims;
        let n_layers = dims.len().saturating_sub(1);
        if n_layers == 0 || self.activations.len() != n_layers || self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(bad("layer counts disagree".into()));
        }
        if self.activations != self.model_id.activations() || self.loss != self.model_id.loss() {
            return Err(bad(format!("activations or loss do not match {}", self.model_id)));
        }
        if dims[0] != self.feature_mode.dimension(self.n_nets) || dims[n_layers] != factorial(self.n_nets) {
            return Err(bad("input or output width does not match the feature mode and net count".into()));
        }
        if self.standardizer.mean.len() != dims[0] || self.standardizer.std.len() != dims[0] {
            return Err(bad("standardizer width mismatch".into()));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (inputs, outputs) = (dims[i], dims[i + 1]);
            if self.weights[i].len() != inputs * outputs || self.biases[i].len() != outputs {
                return Err(bad(format!("layer {i} arrays do not match {inputs}x{outputs}")));
            }
            layers.push(Dense {
                inputs,
                outputs,
                weights: self.weights[i].clone(),
                bias: self.biases[i].clone(),
                activation: self.activations[i],
            });
        }
        Ok(MlpModel {
            kind: self.model_id,
            network: Network { layers },
            standardizer: self.standardizer.clone(),
            feature_mode: self.feature_mode,
            n_nets: self.n_nets,
        })
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_reader(r)?;
        ck.to_model()?;
        Ok(ck)
    }
}
