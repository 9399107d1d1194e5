//! Split manifest: the on-disk record of a prepared split. Re-loading a
//! manifest reconstructs both the dataset index and the partition lists
//! without re-scanning or re-splitting.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetIndex, Entry, Ratios, SplitIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestPartitions {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub class_names: Vec<String>,
    pub seed: u64,
    pub ratios: Ratios,
    pub root: String,
    pub partitions: ManifestPartitions,
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

impl SplitManifest {
    pub fn build(index: &DatasetIndex, split: &SplitIndex) -> Self {
        let rel = |ids: &[usize]| -> Vec<String> {
            ids.iter()
                .map(|&i| relative(&index.entries[i].path, &index.root))
                .collect()
        };
        SplitManifest {
            class_names: index.class_names.clone(),
            seed: split.seed,
            ratios: split.ratios,
            root: index.root.to_string_lossy().into_owned(),
            partitions: ManifestPartitions {
                train: rel(&split.train),
                val: rel(&split.val),
                test: rel(&split.test),
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let body = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&body)?)
    }

    /// Rebuild (DatasetIndex, SplitIndex) from the manifest. `root_override`
    /// relocates the corpus without invalidating the recorded split.
    pub fn resolve(
        &self,
        root_override: Option<&Path>,
    ) -> Result<(DatasetIndex, SplitIndex), DatasetError> {
        let root = root_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(&self.root));
        let label_of = |rel: &str| -> Result<usize, DatasetError> {
            let class = rel.split('/').next().unwrap_or("");
            self.class_names
                .iter()
                .position(|c| c == class)
                .ok_or_else(|| DatasetError::ManifestPath {
                    path: rel.to_string(),
                })
        };

        // entries in scan order: by class, then path
        let mut keyed: Vec<(usize, String)> = Vec::new();
        for part in [
            &self.partitions.train,
            &self.partitions.val,
            &self.partitions.test,
        ] {
            for rel in part {
                keyed.push((label_of(rel)?, rel.clone()));
            }
        }
        keyed.sort();
        let mut counts = vec![0usize; self.class_names.len()];
        let mut lookup: HashMap<String, usize> = HashMap::new();
        let entries: Vec<Entry> = keyed
            .iter()
            .enumerate()
            .map(|(i, (label, rel))| {
                counts[*label] += 1;
                lookup.insert(rel.clone(), i);
                Entry {
                    path: root.join(rel),
                    label: *label,
                }
            })
            .collect();
        let ids = |part: &[String]| -> Vec<usize> {
            let mut v: Vec<usize> = part.iter().map(|rel| lookup[rel]).collect();
            v.sort_unstable();
            v
        };
        let index = DatasetIndex {
            entries,
            class_names: self.class_names.clone(),
            counts,
            root,
            skipped: Vec::new(),
        };
        let split = SplitIndex {
            train: ids(&self.partitions.train),
            val: ids(&self.partitions.val),
            test: ids(&self.partitions.test),
            ratios: self.ratios,
            seed: self.seed,
            warnings: Vec::new(),
        };
        Ok((index, split))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{scan_dataset, stratified_split};
    use ::image::RgbImage;
    use tempfile::tempdir;

    fn corpus(root: &Path, classes: &[(&str, usize)]) {
        for (name, n) in classes {
            let dir = root.join(name);
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..*n {
                RgbImage::from_fn(8, 8, |x, y| ::image::Rgb([x as u8, y as u8, i as u8]))
                    .save(dir.join(format!("img{i:03}.png")))
                    .unwrap();
            }
        }
    }

    #[test]
    fn manifest_round_trips_split() {
        let dir = tempdir().unwrap();
        corpus(dir.path(), &[("a", 10), ("b", 10)]);
        let index = scan_dataset(dir.path()).unwrap();
        let split = stratified_split(&index, Ratios::DEFAULT, 42).unwrap();
        let manifest = SplitManifest::build(&index, &split);

        let mpath = dir.path().join("split.json");
        manifest.save(&mpath).unwrap();
        let reloaded = SplitManifest::load(&mpath).unwrap();
        assert_eq!(reloaded, manifest);

        let (rindex, rsplit) = reloaded.resolve(None).unwrap();
        assert_eq!(rindex.entries, index.entries);
        assert_eq!(rindex.class_names, index.class_names);
        assert_eq!(rsplit.train, split.train);
        assert_eq!(rsplit.val, split.val);
        assert_eq!(rsplit.test, split.test);
    }

    #[test]
    fn manifest_is_byte_deterministic() {
        let dir = tempdir().unwrap();
        corpus(dir.path(), &[("a", 6), ("b", 6)]);
        let index = scan_dataset(dir.path()).unwrap();
        let split = stratified_split(&index, Ratios::DEFAULT, 7).unwrap();
        let m1 = serde_json::to_string_pretty(&SplitManifest::build(&index, &split)).unwrap();
        let split2 = stratified_split(&index, Ratios::DEFAULT, 7).unwrap();
        let m2 = serde_json::to_string_pretty(&SplitManifest::build(&index, &split2)).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn unknown_class_path_rejected() {
        let manifest = SplitManifest {
            class_names: vec!["a".into()],
            seed: 0,
            ratios: Ratios::DEFAULT,
            root: "/tmp".into(),
            partitions: ManifestPartitions {
                train: vec!["zzz/img.png".into()],
                val: vec![],
                test: vec![],
            },
        };
        assert!(matches!(
            manifest.resolve(None),
            Err(DatasetError::ManifestPath { .. })
        ));
    }
}
