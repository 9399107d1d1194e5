//! Minimal CNN building blocks with hand-written forward/backward passes.
//!
//! Activations flow through the stack as `(N, C, H, W)` arrays; dense
//! layers flatten internally and emit `(N, K, 1, 1)`. Shape validation
//! happens once at the model boundary; inside the hot path shape misuse is
//! a programmer error and asserts.

mod adam;
mod archive;
mod conv;
mod layers;

pub use adam::Adam;
pub use archive::{archive_to_bytes, load_archive, read_archive_bytes, save_archive, ArchiveError};
pub use conv::Conv2d;
pub use layers::{BatchNorm2d, Dense, Flatten, GlobalAvgPool, MaxPool2, Normalize, Relu};

use ndarray::{Array2, Array4, ArrayD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Batch of feature maps, `(N, C, H, W)`.
pub type Feat = Array4<f32>;

/// One named parameter tensor with its gradient accumulator.
///
/// Buffers that persist but never receive optimizer updates (batch-norm
/// running statistics) are modeled as non-trainable params.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    pub trainable: bool,
    /// True for running statistics and other non-learned state.
    pub buffer: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
            buffer: false,
        }
    }

    pub fn buffer(name: impl Into<String>, value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: false,
            buffer: true,
        }
    }
}

/// Uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
pub(crate) fn fan_in_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> ArrayD<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    let mut out = ArrayD::zeros(ndarray::IxDyn(shape));
    for v in out.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    out
}

pub trait Layer {
    fn id(&self) -> &str;
    fn forward(&mut self, x: Feat, train: bool) -> Feat;
    /// Propagate `dy` back through the layer, accumulating parameter
    /// gradients for trainable params. Must follow a `forward` call.
    fn backward(&mut self, dy: Feat) -> Feat;
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }
    /// Mark the layer's learned params (non-)trainable. Layers with batch
    /// statistics also pin themselves to inference mode when frozen.
    fn set_trainable(&mut self, trainable: bool) {
        for p in self.params_mut() {
            if !p.buffer {
                p.trainable = trainable;
            }
        }
    }
}

/// A plain layer stack ending in a dense layer of width `num_classes`.
pub struct Network {
    pub layers: Vec<Box<dyn Layer>>,
    /// Expected input shape per sample, (C, H, W).
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
}

impl Network {
    /// Forward pass to pre-softmax logits, `(N, K)`.
    pub fn forward_logits(&mut self, x: Feat, train: bool) -> Array2<f32> {
        let mut cur = x;
        for layer in &mut self.layers {
            cur = layer.forward(cur, train);
        }
        let n = cur.shape()[0];
        let k = cur.shape()[1];
        debug_assert_eq!((cur.shape()[2], cur.shape()[3]), (1, 1));
        cur.into_shape_with_order((n, k)).unwrap()
    }

    /// Backward pass from a logit gradient `(N, K)`.
    pub fn backward_from_logits(&mut self, dlogits: Array2<f32>) {
        let (n, k) = dlogits.dim();
        let mut cur = dlogits.into_shape_with_order((n, k, 1, 1)).unwrap();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(cur);
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Named parameter snapshot in layer order (includes buffers).
    pub fn state_tensors(&self) -> Vec<(String, ArrayD<f32>)> {
        self.params()
            .iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Overwrite parameters from a name → tensor map. Every param must be
    /// present with a matching shape.
    pub fn load_state(&mut self, state: &[(String, ArrayD<f32>)]) -> Result<(), ArchiveError> {
        let map: std::collections::HashMap<&str, &ArrayD<f32>> =
            state.iter().map(|(n, t)| (n.as_str(), t)).collect();
        for p in self.params_mut() {
            let t = map
                .get(p.name.as_str())
                .ok_or_else(|| ArchiveError::MissingTensor(p.name.clone()))?;
            if t.shape() != p.value.shape() {
                return Err(ArchiveError::ShapeMismatch {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    got: t.shape().to_vec(),
                });
            }
            p.value.assign(t);
        }
        Ok(())
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax(logits: &Array2<f32>) -> Array2<f32> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f32 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean categorical cross-entropy of softmax probabilities vs labels.
pub fn cross_entropy(probs: &Array2<f32>, labels: &[usize]) -> f32 {
    let n = labels.len();
    assert_eq!(probs.nrows(), n);
    let eps = 1e-12f32;
    let sum: f32 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -(probs[[i, y]] + eps).ln())
        .sum();
    sum / n as f32
}

/// Gradient of mean cross-entropy w.r.t. logits: (softmax - onehot)/N.
pub fn softmax_ce_grad(probs: &Array2<f32>, labels: &[usize]) -> Array2<f32> {
    let n = labels.len() as f32;
    let mut grad = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n);
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = array![[1.0f32, 2.0, 3.0], [-5.0, 0.0, 5.0]];
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cross_entropy_of_confident_correct_is_small() {
        let probs = array![[0.999f32, 0.0005, 0.0005]];
        assert!(cross_entropy(&probs, &[0]) < 0.01);
    }

    #[test]
    fn ce_grad_rows_sum_to_zero() {
        let logits = array![[0.3f32, -1.2, 2.0], [0.0, 0.0, 0.0]];
        let p = softmax(&logits);
        let g = softmax_ce_grad(&p, &[2, 0]);
        for row in g.rows() {
            assert!(row.sum().abs() < 1e-6);
        }
    }
}
