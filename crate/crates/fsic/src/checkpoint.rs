//! Model checkpoints: JSON with base64 little-endian `f32` tensor payloads.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use fsic_core::encoder::{ToyBackbone, ToyConfig};
use fsic_core::harness::{ExperimentConfig, ModelScalar, TrainedModel};
use fsic_core::inference::ProtoNet;
use fsic_core::math::Tensor;
use fsic_core::scoring::{Architecture, ModelConfig, ScoringHead, SimilarityModel};
use fsic_core::training::TrainState;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "fsic-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Similarity,
    ProtoNet,
    Frozen,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Little-endian `f32` values, base64 encoded.
    pub data: String,
}

impl TensorRecord {
    pub fn encode(t: &Tensor<ModelScalar>) -> Self {
        let bytes: Vec<u8> = t.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorRecord {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor<ModelScalar>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Config(format!("tensor `{}`: bad base64: {e}", self.name)))?;
        let expected: usize = self.shape.iter().product();
        if bytes.len() != expected * 4 {
            return Err(Error::Config(format!(
                "tensor `{}`: {} bytes for shape {:?}",
                self.name,
                bytes.len(),
                self.shape
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Everything needed to rebuild a fold's model and resume its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ExperimentConfig,
    pub fold: usize,
    pub kind: ModelKind,
    /// Backbone settings including the fold's initialisation seed.
    pub backbone: Option<ToyConfig>,
    pub random_seed: Option<u64>,
    pub tensors: Vec<TensorRecord>,
    /// Training bookkeeping: update count, best validation accuracy, RNG state.
    pub train_state: Option<TrainState>,
}

impl Checkpoint {
    pub fn capture(
        config: &ExperimentConfig,
        fold: usize,
        model: &TrainedModel,
        state: Option<&TrainState>,
    ) -> Self {
        let (kind, backbone, random_seed, tensors): (_, _, _, Vec<&Tensor<ModelScalar>>) =
            match model {
                TrainedModel::Similarity(m) => (
                    ModelKind::Similarity,
                    Some(*m.backbone.config()),
                    None,
                    m.parameters(),
                ),
                TrainedModel::ProtoNet(p) => (
                    ModelKind::ProtoNet,
                    Some(*p.backbone.config()),
                    None,
                    backbone_params(&p.backbone),
                ),
                TrainedModel::Frozen(b) => (
                    ModelKind::Frozen,
                    Some(*b.config()),
                    None,
                    backbone_params(b),
                ),
                TrainedModel::Random { seed } => (ModelKind::Random, None, Some(*seed), Vec::new()),
            };
        Checkpoint {
            format: FORMAT.into(),
            config: config.clone(),
            fold,
            kind,
            backbone,
            random_seed,
            tensors: tensors.into_iter().map(TensorRecord::encode).collect(),
            train_state: state.cloned(),
        }
    }

    pub fn restore(&self) -> Result<TrainedModel> {
        if self.format != FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format `{}`",
                self.format
            )));
        }
        let mut tensors = self
            .tensors
            .iter()
            .map(TensorRecord::decode)
            .collect::<Result<Vec<_>>>()?;
        let backbone_cfg = || {
            self.backbone
                .ok_or_else(|| Error::Config("checkpoint is missing its backbone settings".into()))
        };
        Ok(match self.kind {
            ModelKind::Random => TrainedModel::Random {
                seed: self
                    .random_seed
                    .ok_or_else(|| Error::Config("random checkpoint is missing its seed".into()))?,
            },
            ModelKind::Frozen => {
                TrainedModel::Frozen(ToyBackbone::from_tensors(backbone_cfg()?, tensors)?)
            }
            ModelKind::ProtoNet => TrainedModel::ProtoNet(ProtoNet::new(
                ToyBackbone::from_tensors(backbone_cfg()?, tensors)?,
            )),
            ModelKind::Similarity => {
                let config = ModelConfig::new(self.config.architecture, self.config.scoring)?;
                let head = match tensors.iter().position(|t| t.name == "head.weight") {
                    None => ScoringHead::NonParametric,
                    Some(at) => {
                        let mut rest = tensors.split_off(at);
                        if rest.len() != 2 || rest[1].name != "head.bias" {
                            return Err(Error::Config(
                                "head tensors must be head.weight then head.bias".into(),
                            ));
                        }
                        let bias = rest.pop().expect("two head tensors");
                        let weight = rest.pop().expect("two head tensors");
                        match config.architecture {
                            Architecture::Cross => ScoringHead::PaCross { weight, bias },
                            Architecture::Bi => ScoringHead::PaBi { weight, bias },
                        }
                    }
                };
                let backbone = ToyBackbone::from_tensors(backbone_cfg()?, tensors)?;
                TrainedModel::Similarity(SimilarityModel::with_head(backbone, config, head)?)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

fn backbone_params(b: &ToyBackbone<ModelScalar>) -> Vec<&Tensor<ModelScalar>> {
    use fsic_core::encoder::TrainableBackbone;
    b.parameters()
}
