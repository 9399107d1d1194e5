//! Serializable architecture descriptions and their instantiation.

use ndarray::{Array2, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::ImageTensor;
use crate::nn::{
    softmax, BatchNorm2d, Conv2d, Dense, Feat, Flatten, GlobalAvgPool, Layer, MaxPool2, Network,
    Normalize, Relu,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Transfer,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Baseline => write!(f, "baseline"),
            ModelKind::Transfer => write!(f, "transfer"),
        }
    }
}

/// How much of a pretrained backbone stays trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FreezePolicy {
    /// Freeze the earlier backbone blocks; the head plus the trailing
    /// `trainable_tail` backbone blocks stay trainable.
    FineTune { trainable_tail: usize },
    /// Freeze the whole backbone; only the new head trains.
    FeatureExtract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Normalize { mean: [f32; 3], std: [f32; 3] },
    Conv { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize },
    BatchNorm { channels: usize },
    Relu,
    MaxPool { size: usize },
    GlobalAvgPool,
    Flatten,
    Dense { in_dim: usize, out_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub id: String,
    /// Block this layer belongs to; freeze policies act on whole blocks.
    pub block: String,
    pub trainable: bool,
    #[serde(flatten)]
    pub spec: LayerSpec,
}

/// Complete architecture description: layer list with explicit trainable
/// flags, plus the backbone id for transfer models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_side: usize,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_policy: Option<FreezePolicy>,
    pub layers: Vec<LayerEntry>,
}

impl ModelSpec {
    /// Final dense layer width; must equal `num_classes`.
    pub fn output_width(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l.spec {
            LayerSpec::Dense { out_dim, .. } => Some(out_dim),
            _ => None,
        })
    }

    pub fn block_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for l in &self.layers {
            if names.last() != Some(&l.block) {
                names.push(l.block.clone());
            }
        }
        names
    }

    /// Instantiate runtime layers with seeded fan-in-uniform init and the
    /// spec's trainable flags applied.
    pub fn instantiate(&self, seed: u64) -> Network {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Box<dyn Layer>> = Vec::with_capacity(self.layers.len());
        for entry in &self.layers {
            let mut layer: Box<dyn Layer> = match &entry.spec {
                LayerSpec::Normalize { mean, std } => {
                    Box::new(Normalize::new(entry.id.clone(), *mean, *std))
                }
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    kernel,
                    stride,
                    pad,
                } => Box::new(Conv2d::new(
                    entry.id.clone(),
                    *in_ch,
                    *out_ch,
                    *kernel,
                    *stride,
                    *pad,
                    &mut rng,
                )),
                LayerSpec::BatchNorm { channels } => {
                    Box::new(BatchNorm2d::new(entry.id.clone(), *channels))
                }
                LayerSpec::Relu => Box::new(Relu::new(entry.id.clone())),
                LayerSpec::MaxPool { .. } => Box::new(MaxPool2::new(entry.id.clone())),
                LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool::new(entry.id.clone())),
                LayerSpec::Flatten => Box::new(Flatten::new(entry.id.clone())),
                LayerSpec::Dense { in_dim, out_dim } => {
                    Box::new(Dense::new(entry.id.clone(), *in_dim, *out_dim, &mut rng))
                }
            };
            layer.set_trainable(entry.trainable);
            layers.push(layer);
        }
        Network {
            layers,
            input_shape: (3, self.input_side, self.input_side),
            num_classes: self.num_classes,
        }
    }
}

/// A spec together with its live weights.
pub struct Model {
    pub spec: ModelSpec,
    pub net: Network,
}

impl Model {
    pub fn from_spec(spec: ModelSpec, seed: u64) -> Self {
        let net = spec.instantiate(seed);
        Model { spec, net }
    }
}

pub(crate) fn images_to_feat(batch: &[&ImageTensor]) -> Feat {
    let n = batch.len();
    let (h, w) = (batch[0].height(), batch[0].width());
    Feat::from_shape_fn((n, 3, h, w), |(ni, c, y, x)| batch[ni].pixels()[[y, x, c]])
}

/// Run a batch through the model in inference mode and return class
/// probabilities, one row per image, rows summing to 1.
pub fn forward(model: &mut Model, batch: &[&ImageTensor]) -> Result<Array2<f32>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let side = model.spec.input_side;
    for t in batch {
        if t.height() != side || t.width() != side || t.channels() != 3 {
            return Err(ModelError::ShapeMismatch {
                expected: format!("{side}x{side}x3"),
                actual: format!("{}x{}x{}", t.height(), t.width(), t.channels()),
            });
        }
    }
    let x = images_to_feat(batch);
    let logits = model.net.forward_logits(x, false);
    Ok(softmax(&logits))
}

/// Load tensors by name into the network, ignoring names the network does
/// not have; returns how many params were filled.
pub fn load_state_partial(
    net: &mut Network,
    state: &[(String, ArrayD<f32>)],
) -> Result<usize, ModelError> {
    let map: std::collections::HashMap<&str, &ArrayD<f32>> =
        state.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let mut loaded = 0usize;
    for p in net.params_mut() {
        if let Some(t) = map.get(p.name.as_str()) {
            if t.shape() != p.value.shape() {
                return Err(ModelError::WeightShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            p.value.assign(t);
            loaded += 1;
        }
    }
    Ok(loaded)
}
