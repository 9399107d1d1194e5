//! The from-scratch CNN: B repetitions of Conv → BatchNorm → ReLU →
//! MaxPool, then flatten, a hidden fully connected layer with ReLU, and a
//! final fully connected layer of width `num_classes` (softmax applied at
//! decode time).

use super::spec::{LayerEntry, LayerSpec, ModelKind, ModelSpec};
use super::ModelError;

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    /// Output channels of each conv block.
    pub conv_widths: Vec<usize>,
    /// Width of the hidden fully connected layer.
    pub hidden: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            conv_widths: vec![32, 64, 128],
            hidden: 256,
        }
    }
}

/// Build the baseline architecture with the default 32/64/128 widths.
pub fn build_baseline_cnn(input_side: usize, num_classes: usize) -> Result<ModelSpec, ModelError> {
    build_baseline_with(input_side, num_classes, &BaselineConfig::default())
}

pub fn build_baseline_with(
    input_side: usize,
    num_classes: usize,
    config: &BaselineConfig,
) -> Result<ModelSpec, ModelError> {
    if num_classes < 2 {
        return Err(ModelError::BadClassCount(num_classes));
    }
    let blocks = config.conv_widths.len();
    // each block halves the spatial side; require at least 4x4 at the end
    let min_side = 4usize << blocks;
    if input_side < min_side || input_side % (1 << blocks) != 0 {
        return Err(ModelError::InputTooSmall {
            input_side,
            min_side,
            blocks,
        });
    }

    let mut layers = Vec::new();
    let mut in_ch = 3usize;
    let mut side = input_side;
    for (i, &out_ch) in config.conv_widths.iter().enumerate() {
        let b = format!("conv{}", i + 1);
        layers.push(LayerEntry {
            id: format!("conv{}", i + 1),
            block: b.clone(),
            trainable: true,
            spec: LayerSpec::Conv {
                in_ch,
                out_ch,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
        });
        layers.push(LayerEntry {
            id: format!("bn{}", i + 1),
            block: b.clone(),
            trainable: true,
            spec: LayerSpec::BatchNorm { channels: out_ch },
        });
        layers.push(LayerEntry {
            id: format!("relu{}", i + 1),
            block: b.clone(),
            trainable: true,
            spec: LayerSpec::Relu,
        });
        layers.push(LayerEntry {
            id: format!("pool{}", i + 1),
            block: b,
            trainable: true,
            spec: LayerSpec::MaxPool { size: 2 },
        });
        in_ch = out_ch;
        side /= 2;
    }
    let flat_dim = in_ch * side * side;
    layers.push(LayerEntry {
        id: "flatten".into(),
        block: "classifier".into(),
        trainable: true,
        spec: LayerSpec::Flatten,
    });
    layers.push(LayerEntry {
        id: "fc1".into(),
        block: "classifier".into(),
        trainable: true,
        spec: LayerSpec::Dense {
            in_dim: flat_dim,
            out_dim: config.hidden,
        },
    });
    layers.push(LayerEntry {
        id: "fc1_relu".into(),
        block: "classifier".into(),
        trainable: true,
        spec: LayerSpec::Relu,
    });
    layers.push(LayerEntry {
        id: "fc2".into(),
        block: "classifier".into(),
        trainable: true,
        spec: LayerSpec::Dense {
            in_dim: config.hidden,
            out_dim: num_classes,
        },
    });

    Ok(ModelSpec {
        kind: ModelKind::Baseline,
        input_side,
        num_classes,
        backbone_id: None,
        freeze_policy: None,
        layers,
    })
}
