//! Run configuration: a TOML file with sensible defaults, individual
//! fields overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Ratios;
use crate::models::{FreezePolicy, ModelKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Folder-per-class image root.
    pub root: PathBuf,
    /// Images are resized to `target_size` x `target_size`.
    pub target_size: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            target_size: 224,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub seed: u64,
    pub train: f64,
    pub test: f64,
    pub val: f64,
    /// Existing split manifest to reuse instead of splitting again.
    pub manifest: Option<PathBuf>,
}

impl Default for SplitSection {
    fn default() -> Self {
        let r = Ratios::DEFAULT;
        Self {
            seed: 0,
            train: r.train,
            test: r.test,
            val: r.val,
            manifest: None,
        }
    }
}

impl SplitSection {
    pub fn ratios(&self) -> Ratios {
        Ratios {
            train: self.train,
            test: self.test,
            val: self.val,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub backbone_id: String,
    /// `feature_extract` or `fine_tune`; transfer models only.
    pub freeze_mode: String,
    /// Trailing backbone blocks left trainable under `fine_tune`.
    pub trainable_tail: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::Transfer,
            backbone_id: "cs-b0".to_string(),
            freeze_mode: "fine_tune".to_string(),
            trainable_tail: 1,
        }
    }
}

impl ModelSection {
    pub fn freeze_policy(&self) -> Result<FreezePolicy, String> {
        match self.freeze_mode.as_str() {
            "feature_extract" => Ok(FreezePolicy::FeatureExtract),
            "fine_tune" => Ok(FreezePolicy::FineTune {
                trainable_tail: self.trainable_tail,
            }),
            other => Err(format!(
                "unknown freeze_mode '{other}' (expected feature_extract or fine_tune)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub seed: u64,
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainSection {
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
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub split: SplitSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.data.target_size, 224);
        assert!((cfg.split.train - 0.7).abs() < 1e-12);
    }

    #[test]
    fn partial_sections_override_only_what_they_name() {
        let cfg: RunConfig = toml::from_str(
            "[train]\nepochs = 3\n\n[model]\nkind = \"baseline\"\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.model.kind, ModelKind::Baseline);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("[train]\nepoch = 3\n").unwrap_err();
        assert!(err.to_string().contains("epoch"));
    }

    #[test]
    fn freeze_policy_parses_both_modes() {
        let mut m = ModelSection::default();
        m.freeze_mode = "feature_extract".into();
        assert_eq!(m.freeze_policy().unwrap(), FreezePolicy::FeatureExtract);
        m.freeze_mode = "fine_tune".into();
        m.trainable_tail = 2;
        assert_eq!(
            m.freeze_policy().unwrap(),
            FreezePolicy::FineTune { trainable_tail: 2 }
        );
        m.freeze_mode = "melt".into();
        assert!(m.freeze_policy().is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
