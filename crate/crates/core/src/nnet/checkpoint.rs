use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Dense, MlpNetwork};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk network: dims, activation tag, per-layer parameters (row-major
/// `[out, in]` weights), plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: String,
    pub layers: Vec<LayerRecord>,
    pub seed: u64,
    pub config_hash: String,
}

pub const ACTIVATION: &str = "relu";

impl Checkpoint {
    pub fn from_network(net: &MlpNetwork, seed: u64, config_hash: &str) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            layer_dims: net.layer_dims().to_vec(),
            activation: ACTIVATION.to_string(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    weight: l.weight.values().to_vec(),
                    bias: l.bias.values().to_vec(),
                })
                .collect(),
            seed,
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_network(&self) -> Result<MlpNetwork> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: self.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if self.activation != ACTIVATION {
            return Err(Error::Validation(format!(
                "unsupported activation {:?}",
                self.activation
            )));
        }
        if self.layers.len() + 1 != self.layer_dims.len() {
            return Err(Error::Validation(format!(
                "{} layers for dims {:?}",
                self.layers.len(),
                self.layer_dims
            )));
        }
        let layers = self
            .layers
            .iter()
            .zip(self.layer_dims.windows(2))
            .map(|(rec, d)| {
                Ok(Dense {
                    weight: Tensor::new(vec![d[1], d[0]], rec.weight.clone())?,
                    bias: Tensor::new(vec![d[1]], rec.bias.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = MlpNetwork::from_layers(layers)?;
        if net
            .layers()
            .iter()
            .any(|l| !l.weight.is_finite() || !l.bias.is_finite())
        {
            return Err(Error::Validation(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
