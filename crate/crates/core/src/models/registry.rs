//! Backbone weight registry: id → (architecture, source, pinned checksum).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::backbone::BackboneArch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSource {
    /// `http://` or `file://` URL (or a bare filesystem path).
    Url { url: String },
    /// Deterministic in-process pretraining on the bundled synthetic
    /// source task; the recipe string pins the procedure version.
    BuiltinPretrain { recipe: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub backbone_id: String,
    pub arch: BackboneArch,
    pub source: WeightSource,
    /// Hex sha256 of the weight bundle bytes. `None` means
    /// trust-on-first-use: the checksum is recorded in the cache sidecar
    /// when first obtained and verified thereafter.
    pub checksum: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

/// Pinned digest of the deterministic `pretrain-v1` bundle for `cs-b0`.
pub const CS_B0_CHECKSUM: &str =
    "19438b6885f40072c4b581811b29b8ba9e4b9f9209ea9883de40acce537ae0c7";

impl Registry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Default registry: the B0-scale compound-scaled backbone, built by
    /// the bundled deterministic pretraining recipe.
    pub fn bundled() -> Self {
        let mut reg = Self::empty();
        reg.insert(RegistryEntry {
            backbone_id: "cs-b0".to_string(),
            arch: BackboneArch::scaled(0),
            source: WeightSource::BuiltinPretrain {
                recipe: "pretrain-v1".to_string(),
            },
            checksum: Some(CS_B0_CHECKSUM.to_string()),
        });
        reg
    }

    pub fn insert(&mut self, entry: RegistryEntry) {
        self.entries.insert(entry.backbone_id.clone(), entry);
    }

    pub fn get(&self, backbone_id: &str) -> Option<&RegistryEntry> {
        self.entries.get(backbone_id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_registry_has_b0() {
        let reg = Registry::bundled();
        let entry = reg.get("cs-b0").unwrap();
        assert_eq!(entry.arch.feature_dim(), 80);
        assert!(entry.checksum.is_some());
        assert!(reg.get("cs-b7").is_none());
    }
}
