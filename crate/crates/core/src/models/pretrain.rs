//! Deterministic backbone pretraining on the bundled synthetic source
//! task.
//!
//! Training is fully seeded and reduces gradients in batch order, so the
//! produced bundle bytes are reproducible and can be checksum-pinned by
//! the registry.

use ndarray::{Array3, ArrayD, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backbone::BackboneArch;
use super::spec::{LayerEntry, LayerSpec, ModelKind, ModelSpec};
use super::ModelError;
use crate::nn::{archive_to_bytes, cross_entropy, softmax, softmax_ce_grad, Adam, Feat};
use crate::synth;

pub const RECIPE_V1: &str = "pretrain-v1";

const SIDE: usize = 64;
const PER_CLASS: usize = 40;
const EPOCHS: usize = 4;
const BATCH: usize = 16;
const LR: f32 = 1e-3;
const SEED: u64 = 0x0E5E_ED01;

fn batch_to_feat(images: &[Array3<f32>], ids: &[usize]) -> Feat {
    let (h, w) = (images[ids[0]].shape()[0], images[ids[0]].shape()[1]);
    Feat::from_shape_fn((ids.len(), 3, h, w), |(n, c, y, x)| {
        images[ids[n]][[y, x, c]]
    })
}

fn channel_stats(images: &[Array3<f32>]) -> ([f32; 3], [f32; 3]) {
    let mut mean = [0f64; 3];
    let mut count = 0f64;
    for img in images {
        for c in 0..3 {
            mean[c] += img.index_axis(Axis(2), c).sum() as f64;
        }
        count += (img.len() / 3) as f64;
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let mut var = [0f64; 3];
    for img in images {
        for c in 0..3 {
            var[c] += img
                .index_axis(Axis(2), c)
                .mapv(|v| (v as f64 - mean[c]).powi(2))
                .sum();
        }
    }
    let mut m32 = [0f32; 3];
    let mut s32 = [0f32; 3];
    for c in 0..3 {
        m32[c] = mean[c] as f32;
        s32[c] = ((var[c] / count).sqrt() as f32).max(1e-3);
    }
    (m32, s32)
}

/// Run the pinned pretraining recipe and serialize the resulting backbone
/// weights plus the source-corpus channel statistics as a bundle archive.
pub fn generate_bundle_bytes(arch: &BackboneArch, recipe: &str) -> Result<Vec<u8>, ModelError> {
    if recipe != RECIPE_V1 {
        return Err(ModelError::UnknownRecipe(recipe.to_string()));
    }
    let (images, labels) = synth::source_corpus(PER_CLASS, SIDE, SEED);
    let (mean, std) = channel_stats(&images);

    // backbone + source classification head
    let mut layers = vec![LayerEntry {
        id: "input_norm".into(),
        block: "input".into(),
        trainable: false,
        spec: LayerSpec::Normalize { mean, std },
    }];
    layers.extend(arch.layers());
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
            in_dim: arch.feature_dim(),
            out_dim: synth::SOURCE_CLASSES,
        },
    });
    let spec = ModelSpec {
        kind: ModelKind::Baseline,
        input_side: SIDE,
        num_classes: synth::SOURCE_CLASSES,
        backbone_id: Some(arch.id.clone()),
        freeze_policy: None,
        layers,
    };
    let mut net = spec.instantiate(SEED);
    let mut adam = Adam::new(LR);

    let n = images.len();
    for epoch in 0..EPOCHS {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (epoch as u64 + 1));
        order.shuffle(&mut rng);
        for chunk in order.chunks(BATCH) {
            let x = batch_to_feat(&images, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let logits = net.forward_logits(x, true);
            let probs = softmax(&logits);
            debug_assert!(cross_entropy(&probs, &y).is_finite());
            net.zero_grads();
            net.backward_from_logits(softmax_ce_grad(&probs, &y));
            let mut params = net.params_mut();
            adam.step(&mut params);
        }
    }

    // strip the head: keep channel stats + backbone params only
    let mut tensors: Vec<(String, ArrayD<f32>)> = vec![
        (
            "norm.mean".to_string(),
            ArrayD::from_shape_vec(ndarray::IxDyn(&[3]), mean.to_vec()).unwrap(),
        ),
        (
            "norm.std".to_string(),
            ArrayD::from_shape_vec(ndarray::IxDyn(&[3]), std.to_vec()).unwrap(),
        ),
    ];
    let wanted = arch.param_names();
    let state = net.state_tensors();
    for name in &wanted {
        let t = state
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| ModelError::BundleMismatch(format!("missing {name}")))?;
        tensors.push(t.clone());
    }
    Ok(archive_to_bytes(&tensors))
}
