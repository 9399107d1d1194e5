//! Transfer model assembly: pretrained backbone + fresh classification
//! head, with a block-level freeze policy.

use super::fetch::WeightBundle;
use super::spec::{FreezePolicy, LayerEntry, LayerSpec, Model, ModelKind, ModelSpec};
use super::{load_state_partial, ModelError};

/// Build the transfer architecture over the bundle's backbone: input
/// normalization pinned to the pretraining statistics, the backbone
/// blocks, then a global-average-pool + dense head sized for
/// `num_classes`. Trainable flags follow `policy`.
pub fn build_transfer_spec(
    bundle: &WeightBundle,
    input_side: usize,
    num_classes: usize,
    policy: FreezePolicy,
) -> Result<ModelSpec, ModelError> {
    if num_classes < 2 {
        return Err(ModelError::BadClassCount(num_classes));
    }
    let blocks = bundle.arch.num_blocks();
    let min_side = bundle.arch.min_input_side();
    if input_side < min_side || input_side % (1 << bundle.arch.block_widths.len()) != 0 {
        return Err(ModelError::InputTooSmall {
            input_side,
            min_side,
            blocks,
        });
    }
    let trainable_tail = match policy {
        FreezePolicy::FeatureExtract => 0,
        FreezePolicy::FineTune { trainable_tail } => {
            if trainable_tail > blocks {
                return Err(ModelError::BadFreezePolicy {
                    trainable_tail,
                    blocks,
                });
            }
            trainable_tail
        }
    };

    let block_names = bundle.arch.block_names();
    // blocks with index >= frozen_upto stay trainable
    let frozen_upto = blocks - trainable_tail;

    let mut layers = vec![LayerEntry {
        id: "input_norm".into(),
        block: "input".into(),
        trainable: false,
        spec: LayerSpec::Normalize {
            mean: bundle.norm_mean,
            std: bundle.norm_std,
        },
    }];
    for mut entry in bundle.arch.layers() {
        let idx = block_names
            .iter()
            .position(|b| *b == entry.block)
            .expect("backbone layer block must be a backbone block name");
        entry.trainable = idx >= frozen_upto;
        layers.push(entry);
    }
    layers.push(LayerEntry {
        id: "gap".into(),
        block: "head".into(),
        trainable: true,
        spec: LayerSpec::GlobalAvgPool,
    });
    layers.push(LayerEntry {
        id: "head_fc".into(),
        block: "head".into(),
        trainable: true,
        spec: LayerSpec::Dense {
            in_dim: bundle.arch.feature_dim(),
            out_dim: num_classes,
        },
    });

    Ok(ModelSpec {
        kind: ModelKind::Transfer,
        input_side,
        num_classes,
        backbone_id: Some(bundle.backbone_id.clone()),
        freeze_policy: Some(policy),
        layers,
    })
}

/// Instantiate the transfer model: seeded init for the head, then overwrite
/// every backbone parameter with the bundle's weights.
pub fn build_transfer_model(
    bundle: &WeightBundle,
    input_side: usize,
    num_classes: usize,
    policy: FreezePolicy,
    seed: u64,
) -> Result<Model, ModelError> {
    let spec = build_transfer_spec(bundle, input_side, num_classes, policy)?;
    let mut model = Model::from_spec(spec, seed);
    let loaded = load_state_partial(&mut model.net, &bundle.tensors)?;
    if loaded != bundle.tensors.len() {
        return Err(ModelError::BundleMismatch(format!(
            "bundle has {} tensors but only {loaded} matched the network",
            bundle.tensors.len()
        )));
    }
    Ok(model)
}
