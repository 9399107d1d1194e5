//! Model construction: the from-scratch convolutional baseline and the
//! transfer-learning model over a pretrained compound-scaled backbone.

mod backbone;
mod baseline;
mod fetch;
mod pretrain;
mod registry;
mod spec;
mod transfer;

pub use backbone::BackboneArch;
pub use baseline::{build_baseline_cnn, build_baseline_with, BaselineConfig};
pub use fetch::{
    default_cache_dir, fetch_pretrained, fetch_pretrained_from, FetchError, WeightBundle,
    CACHE_ENV,
};
pub use pretrain::{generate_bundle_bytes, RECIPE_V1};
pub use registry::{Registry, RegistryEntry, WeightSource, CS_B0_CHECKSUM};
pub use spec::{
    forward, load_state_partial, FreezePolicy, LayerEntry, LayerSpec, Model, ModelKind, ModelSpec,
};
pub use transfer::{build_transfer_model, build_transfer_spec};

pub(crate) use spec::images_to_feat;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least 2 classes, got {0}")]
    BadClassCount(usize),
    #[error("input side {input_side} too small: {blocks} pooling stages need a multiple of a power of two, at least {min_side}")]
    InputTooSmall {
        input_side: usize,
        min_side: usize,
        blocks: usize,
    },
    #[error("input shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("weight shape mismatch for {name}: expected {expected:?}, got {got:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("trainable tail of {trainable_tail} blocks exceeds the {blocks} backbone blocks")]
    BadFreezePolicy { trainable_tail: usize, blocks: usize },
    #[error("weight bundle does not match the architecture: {0}")]
    BundleMismatch(String),
    #[error("unknown pretraining recipe '{0}'")]
    UnknownRecipe(String),
}
