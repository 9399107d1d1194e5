//! Folder-per-class corpus handling: discovery, preprocessing, and
//! deterministic stratified splitting.
//!
//! Expected layout: `<root>/<class_name>/*.{png,jpg,jpeg,bmp}`. Class order
//! is lexicographic over folder names so labels are stable across runs.

mod image;
mod manifest;
mod split;

pub use image::{load_image, ImageTensor, LabeledImage};
pub use manifest::SplitManifest;
pub use split::{stratified_split, Ratios, SplitIndex};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("dataset root {0} contains no class folders")]
    NoClasses(PathBuf),
    #[error("class folder {0} contains no images")]
    EmptyClass(PathBuf),
    #[error("dataset index is empty")]
    EmptyIndex,
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: ::image::ImageError,
    },
    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        source: ::image::ImageError,
    },
    #[error("image {path} has a zero dimension")]
    ZeroDimension { path: PathBuf },
    #[error("target side length must be nonzero")]
    ZeroTarget,
    #[error("split ratios must be positive")]
    RatioNonPositive,
    #[error("split ratios sum to {sum}, expected 1")]
    RatioSum { sum: f64 },
    #[error("manifest path {path} does not belong to any class folder")]
    ManifestPath { path: String },
    #[error("manifest error: {0}")]
    ManifestFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// One corpus entry: image path plus its class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub path: PathBuf,
    pub label: usize,
}

/// Scanned corpus: entries, lexicographic class names, per-class counts,
/// and the paths that failed the readability check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetIndex {
    pub entries: Vec<Entry>,
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
    pub root: PathBuf,
    pub skipped: Vec<PathBuf>,
}

impl DatasetIndex {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `skipped.txt` body: one path per line.
    pub fn skip_list(&self) -> String {
        let mut out = String::new();
        for p in &self.skipped {
            out.push_str(&p.display().to_string());
            out.push('\n');
        }
        out
    }
}

/// Walk `root`, treating each immediate subdirectory as one class.
///
/// Files that do not decode a valid image header go to the skip list;
/// a class folder with no usable image at all is fatal.
pub fn scan_dataset(root: &Path) -> Result<DatasetIndex, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let mut class_dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort_by_key(|p| p.file_name().map(|n| n.to_os_string()));
    if class_dirs.is_empty() {
        return Err(DatasetError::NoClasses(root.to_path_buf()));
    }

    let mut entries = Vec::new();
    let mut class_names = Vec::new();
    let mut counts = Vec::new();
    let mut skipped = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        let mut count = 0usize;
        for file in files {
            // header-only sniff; full decode happens at load time
            match ::image::image_dimensions(&file) {
                Ok((w, h)) if w > 0 && h > 0 => {
                    entries.push(Entry {
                        path: file,
                        label,
                    });
                    count += 1;
                }
                _ => skipped.push(file),
            }
        }
        if count == 0 {
            return Err(DatasetError::EmptyClass(dir.clone()));
        }
        class_names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        counts.push(count);
    }
    Ok(DatasetIndex {
        entries,
        class_names,
        counts,
        root: root.to_path_buf(),
        skipped,
    })
}

/// Per-class share of the whole corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
    pub percentages: Vec<f64>,
}

impl DistributionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,count,percentage\n");
        for i in 0..self.class_names.len() {
            out.push_str(&format!(
                "{},{},{:.4}\n",
                self.class_names[i], self.counts[i], self.percentages[i]
            ));
        }
        out
    }
}

pub fn class_distribution(index: &DatasetIndex) -> Result<DistributionReport, DatasetError> {
    if index.is_empty() {
        return Err(DatasetError::EmptyIndex);
    }
    let total = index.len() as f64;
    Ok(DistributionReport {
        class_names: index.class_names.clone(),
        counts: index.counts.clone(),
        percentages: index
            .counts
            .iter()
            .map(|&c| 100.0 * c as f64 / total)
            .collect(),
    })
}

/// Load and preprocess the given entry indices (parallel across images).
pub fn load_images(
    index: &DatasetIndex,
    which: &[usize],
    target: usize,
) -> Result<Vec<LabeledImage>, DatasetError> {
    let loaded = parallel::map_slice(which, |&i| {
        let entry = &index.entries[i];
        load_image(&entry.path, target).map(|tensor| LabeledImage {
            tensor,
            label: entry.label,
            path: entry.path.clone(),
        })
    });
    loaded.into_iter().collect()
}
