//! Mini-batch training loop with seeded shuffling, checkpointing, and
//! bit-exact resume.
//!
//! Each epoch's shuffle is keyed by the run seed and the *absolute* epoch
//! number, and the optimizer state is checkpointed alongside the weights,
//! so training N epochs then resuming for M more replays exactly the same
//! arithmetic as training N+M epochs in one go.

use std::path::Path;

use ndarray::ArrayD;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledImage;
use crate::models::{images_to_feat, Model, ModelError, ModelSpec};
use crate::nn::{
    archive_to_bytes, cross_entropy, read_archive_bytes, softmax, softmax_ce_grad, Adam,
    ArchiveError, Feat,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss diverged (non-finite) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("batch size must be at least 1")]
    BadBatchSize,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint does not match: {0}")]
    CheckpointMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint metadata: {0}")]
    Meta(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    /// Stop early after this many epochs without a new best validation
    /// metric. `None` disables early stopping.
    #[serde(default)]
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            early_stop_patience: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Absolute epoch number, starting at 0.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    /// Epochs at which a training segment started (fresh run or resume).
    pub segment_starts: Vec<usize>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_acc,
                fmt_opt(e.val_loss),
                fmt_opt(e.val_acc),
            ));
        }
        out
    }
}

/// Average cross-entropy loss and accuracy of `model` on `data`, in
/// inference mode.
pub fn evaluate_split(
    model: &mut Model,
    data: &[LabeledImage],
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut loss_sum = 0f64;
    let mut correct = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&crate::dataset::ImageTensor> = chunk.iter().map(|s| &s.tensor).collect();
        let x = images_to_feat(&refs);
        let y: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let logits = model.net.forward_logits(x, false);
        let probs = softmax(&logits);
        loss_sum += cross_entropy(&probs, &y) as f64 * chunk.len() as f64;
        correct += count_correct(&probs, &y);
    }
    let n = data.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Predicted class indices for `data`, in inference mode.
pub fn predict(
    model: &mut Model,
    data: &[LabeledImage],
    batch_size: usize,
) -> Result<Vec<usize>, TrainError> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&crate::dataset::ImageTensor> = chunk.iter().map(|s| &s.tensor).collect();
        let x = images_to_feat(&refs);
        let logits = model.net.forward_logits(x, false);
        let probs = softmax(&logits);
        out.extend(argmax_rows(&probs));
    }
    Ok(out)
}

fn argmax_rows(probs: &ndarray::Array2<f32>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn count_correct(probs: &ndarray::Array2<f32>, y: &[usize]) -> usize {
    argmax_rows(probs)
        .iter()
        .zip(y)
        .filter(|(p, t)| p == t)
        .count()
}

fn batch_feat(data: &[LabeledImage], ids: &[usize]) -> (Feat, Vec<usize>) {
    let refs: Vec<&crate::dataset::ImageTensor> = ids.iter().map(|&i| &data[i].tensor).collect();
    let y: Vec<usize> = ids.iter().map(|&i| data[i].label).collect();
    (images_to_feat(&refs), y)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Serialize, Deserialize)]
struct BestMeta {
    spec: ModelSpec,
    epoch: usize,
    metric: f64,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    spec: ModelSpec,
    config: TrainConfig,
    epochs_done: usize,
    history: TrainingHistory,
    best_epoch: Option<usize>,
    best_metric: Option<f64>,
}

/// Owns the model, optimizer, history, and the best-so-far snapshot.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub history: TrainingHistory,
    pub epochs_done: usize,
    adam: Adam,
    best_epoch: Option<usize>,
    best_metric: Option<f64>,
    best_tensors: Vec<(String, ArrayD<f32>)>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let adam = Adam::new(config.learning_rate);
        Self {
            model,
            config,
            history: TrainingHistory::default(),
            epochs_done: 0,
            adam,
            best_epoch: None,
            best_metric: None,
            best_tensors: Vec::new(),
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_metric(&self) -> Option<f64> {
        self.best_metric
    }

    /// Weights of the best epoch so far (by validation accuracy, or
    /// training accuracy when no validation split is given); current
    /// weights if no epoch has finished.
    pub fn best_tensors(&self) -> Vec<(String, ArrayD<f32>)> {
        if self.best_tensors.is_empty() {
            self.model.net.state_tensors()
        } else {
            self.best_tensors.clone()
        }
    }

    /// Train for `epochs` more epochs. Returns the number actually run
    /// (early stopping may cut it short).
    pub fn run(
        &mut self,
        epochs: usize,
        train: &[LabeledImage],
        val: Option<&[LabeledImage]>,
    ) -> Result<usize, TrainError> {
        if self.config.batch_size == 0 {
            return Err(TrainError::BadBatchSize);
        }
        if train.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        self.history.segment_starts.push(self.epochs_done);
        let mut ran = 0usize;
        for _ in 0..epochs {
            let epoch = self.epochs_done;
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut epoch_rng(self.config.seed, epoch));

            let mut loss_sum = 0f64;
            let mut correct = 0usize;
            for (batch, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let (x, y) = batch_feat(train, chunk);
                let logits = self.model.net.forward_logits(x, true);
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::Diverged { epoch, batch });
                }
                let probs = softmax(&logits);
                let loss = cross_entropy(&probs, &y);
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, batch });
                }
                loss_sum += loss as f64 * chunk.len() as f64;
                correct += count_correct(&probs, &y);
                self.model.net.zero_grads();
                self.model.net.backward_from_logits(softmax_ce_grad(&probs, &y));
                let mut params = self.model.net.params_mut();
                self.adam.step(&mut params);
            }
            let train_loss = loss_sum / train.len() as f64;
            let train_acc = correct as f64 / train.len() as f64;

            let (val_loss, val_acc) = match val {
                Some(v) if !v.is_empty() => {
                    let (l, a) = evaluate_split(&mut self.model, v, self.config.batch_size)?;
                    (Some(l), Some(a))
                }
                _ => (None, None),
            };

            self.history.epochs.push(EpochStats {
                epoch,
                train_loss,
                train_acc,
                val_loss,
                val_acc,
            });
            self.epochs_done += 1;
            ran += 1;

            // best-so-far: strictly-greater keeps the earliest of a tie
            let metric = val_acc.unwrap_or(train_acc);
            if self.best_metric.map(|b| metric > b).unwrap_or(true) {
                self.best_metric = Some(metric);
                self.best_epoch = Some(epoch);
                self.best_tensors = self.model.net.state_tensors();
            } else if let Some(patience) = self.config.early_stop_patience {
                let since_best = epoch - self.best_epoch.unwrap_or(0);
                if since_best >= patience {
                    break;
                }
            }
        }
        Ok(ran)
    }

    /// Persist the run: best weights (`model.json` + `weights.bin`), the
    /// full resume state (`state.json` + `state.bin`, including optimizer
    /// moments), and `history.csv`.
    pub fn save(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir)?;
        let best_meta = BestMeta {
            spec: self.model.spec.clone(),
            epoch: self.best_epoch.unwrap_or(0),
            metric: self.best_metric.unwrap_or(0.0),
        };
        std::fs::write(
            dir.join("model.json"),
            serde_json::to_string_pretty(&best_meta)?,
        )?;
        std::fs::write(dir.join("weights.bin"), archive_to_bytes(&self.best_tensors()))?;

        let state_meta = StateMeta {
            spec: self.model.spec.clone(),
            config: self.config.clone(),
            epochs_done: self.epochs_done,
            history: self.history.clone(),
            best_epoch: self.best_epoch,
            best_metric: self.best_metric,
        };
        std::fs::write(
            dir.join("state.json"),
            serde_json::to_string_pretty(&state_meta)?,
        )?;
        let mut tensors = self.model.net.state_tensors();
        tensors.extend(self.adam.state_tensors());
        std::fs::write(dir.join("state.bin"), archive_to_bytes(&tensors))?;
        std::fs::write(dir.join("history.csv"), self.history.to_csv())?;
        Ok(())
    }

    /// Reload a saved run to continue training exactly where it stopped.
    pub fn resume(dir: &Path) -> Result<Self, TrainError> {
        let meta: StateMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("state.json"))?)?;
        let mut model = Model::from_spec(meta.spec, meta.config.seed);
        let tensors = read_archive_bytes(&std::fs::read(dir.join("state.bin"))?)?;
        let (model_tensors, adam_tensors): (Vec<_>, Vec<_>) = tensors
            .into_iter()
            .partition(|(n, _)| !n.starts_with("adam."));
        model.net.load_state(&model_tensors)?;
        let mut adam = Adam::new(meta.config.learning_rate);
        adam.load_state(&adam_tensors);

        let best_meta: BestMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)?;
        if best_meta.spec != model.spec {
            return Err(TrainError::CheckpointMismatch(
                "best checkpoint architecture differs from the training state".into(),
            ));
        }
        let best_tensors = read_archive_bytes(&std::fs::read(dir.join("weights.bin"))?)?;

        Ok(Self {
            model,
            config: meta.config,
            history: meta.history,
            epochs_done: meta.epochs_done,
            adam,
            best_epoch: meta.best_epoch,
            best_metric: meta.best_metric,
            best_tensors,
        })
    }
}

/// Load the best checkpoint of a saved run for inference.
pub fn load_best_model(dir: &Path) -> Result<(Model, usize, f64), TrainError> {
    let meta: BestMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("model.json"))?)?;
    let mut model = Model::from_spec(meta.spec, 0);
    let tensors = read_archive_bytes(&std::fs::read(dir.join("weights.bin"))?)?;
    model.net.load_state(&tensors)?;
    Ok((model, meta.epoch, meta.metric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageTensor;
    use crate::models::build_baseline_with;
    use crate::models::BaselineConfig;
    use crate::synth;
    use rand_chacha::ChaCha8Rng;

    const SIDE: usize = 16;

    fn toy_model(seed: u64) -> Model {
        let cfg = BaselineConfig {
            conv_widths: vec![4, 8],
            hidden: 16,
        };
        let spec = build_baseline_with(SIDE, 4, &cfg).unwrap();
        Model::from_spec(spec, seed)
    }

    fn toy_data(per_class: usize, seed: u64) -> Vec<LabeledImage> {
        let mut out = Vec::new();
        for label in 0..4 {
            for i in 0..per_class {
                let mut rng =
                    <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed ^ ((label * 131 + i) as u64 + 1));
                let px = synth::fundus_image(label, SIDE, &mut rng);
                out.push(LabeledImage {
                    tensor: ImageTensor::from_pixels(px),
                    label,
                    path: std::path::PathBuf::new(),
                });
            }
        }
        out
    }

    #[test]
    fn zero_epochs_leaves_weights_untouched() {
        let data = toy_data(2, 1);
        let mut t = Trainer::new(toy_model(3), TrainConfig::default());
        let before = t.model.net.state_tensors();
        let ran = t.run(0, &data, None).unwrap();
        assert_eq!(ran, 0);
        assert_eq!(t.model.net.state_tensors(), before);
        assert!(t.history.epochs.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_data(2, 1);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut a = Trainer::new(toy_model(3), cfg.clone());
        a.run(2, &data, None).unwrap();
        let mut b = Trainer::new(toy_model(3), cfg);
        b.run(2, &data, None).unwrap();
        assert_eq!(a.model.net.state_tensors(), b.model.net.state_tensors());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn save_resume_replays_exactly() {
        let data = toy_data(2, 1);
        let val = toy_data(1, 99);
        let cfg = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();

        let mut split = Trainer::new(toy_model(3), cfg.clone());
        split.run(2, &data, Some(&val)).unwrap();
        split.save(dir.path()).unwrap();
        let mut resumed = Trainer::resume(dir.path()).unwrap();
        resumed.run(2, &data, Some(&val)).unwrap();

        let mut straight = Trainer::new(toy_model(3), cfg);
        straight.run(4, &data, Some(&val)).unwrap();

        assert_eq!(
            resumed.model.net.state_tensors(),
            straight.model.net.state_tensors()
        );
        assert_eq!(resumed.history.epochs, straight.history.epochs);
        assert_eq!(resumed.epochs_done, 4);
        // segment boundaries record the resume point
        assert_eq!(resumed.history.segment_starts, vec![0, 2]);
    }

    #[test]
    fn divergent_loss_aborts_with_location() {
        // two linear layers, no normalization or relu in between: one
        // absurdly large step makes the second matmul overflow f32
        use crate::models::{LayerEntry, LayerSpec, ModelKind, ModelSpec};
        let dim = 3 * SIDE * SIDE;
        let layer = |id: &str, spec| LayerEntry {
            id: id.into(),
            block: "all".into(),
            trainable: true,
            spec,
        };
        let spec = ModelSpec {
            kind: ModelKind::Baseline,
            input_side: SIDE,
            num_classes: 4,
            backbone_id: None,
            freeze_policy: None,
            layers: vec![
                layer("flatten", LayerSpec::Flatten),
                layer(
                    "fc1",
                    LayerSpec::Dense {
                        in_dim: dim,
                        out_dim: 8,
                    },
                ),
                layer(
                    "fc2",
                    LayerSpec::Dense {
                        in_dim: 8,
                        out_dim: 4,
                    },
                ),
            ],
        };
        let data = toy_data(2, 1);
        let cfg = TrainConfig {
            learning_rate: 1e25,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(Model::from_spec(spec, 3), cfg);
        let err = t.run(50, &data, None).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { .. }));
    }

    #[test]
    fn early_stopping_cuts_the_run_short() {
        let data = toy_data(2, 1);
        let cfg = TrainConfig {
            batch_size: 4,
            learning_rate: 0.0, // metric can never improve after epoch 0
            early_stop_patience: Some(2),
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(toy_model(3), cfg);
        let ran = t.run(20, &data, None).unwrap();
        assert!(ran < 20, "expected early stop, ran {ran} epochs");
        assert_eq!(t.best_epoch(), Some(0));
    }

    #[test]
    fn best_checkpoint_tracks_validation_metric() {
        let data = toy_data(3, 1);
        let val = toy_data(1, 99);
        let cfg = TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(toy_model(3), cfg);
        t.run(3, &data, Some(&val)).unwrap();
        let best = t.best_epoch().unwrap();
        let best_acc = t.history.epochs[best].val_acc.unwrap();
        for e in &t.history.epochs {
            assert!(e.val_acc.unwrap() <= best_acc);
        }
        // ties resolve to the earliest epoch
        for e in &t.history.epochs[..best] {
            assert!(e.val_acc.unwrap() < best_acc);
        }
    }

    #[test]
    fn history_csv_shape() {
        let h = TrainingHistory {
            epochs: vec![EpochStats {
                epoch: 0,
                train_loss: 1.5,
                train_acc: 0.25,
                val_loss: None,
                val_acc: None,
            }],
            segment_starts: vec![0],
        };
        let csv = h.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,train_loss,train_acc,val_loss,val_acc"
        );
        assert_eq!(lines.next().unwrap(), "0,1.5,0.25,,");
    }
}
