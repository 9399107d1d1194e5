//! Pretrained-weight acquisition and the on-disk cache.
//!
//! Cache layout: `<cache>/<backbone_id>/<checksum>.bin` plus a JSON
//! sidecar `<checksum>.json` recording source and fetch time. Warm-cache
//! hits never touch the network.

use std::path::{Path, PathBuf};

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::backbone::BackboneArch;
use super::pretrain;
use super::registry::{Registry, RegistryEntry, WeightSource};
use super::ModelError;
use crate::nn::{read_archive_bytes, ArchiveError};

/// Environment variable overriding the weight cache directory.
pub const CACHE_ENV: &str = "FUNDUS_CACHE_DIR";

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("unknown backbone id '{0}' (not in the registry)")]
    UnknownBackbone(String),
    #[error("checksum mismatch for {backbone_id}: expected {expected}, got {got}")]
    Integrity {
        backbone_id: String,
        expected: String,
        got: String,
    },
    #[error("failed to fetch {url}: {message}")]
    Network { url: String, message: String },
    #[error("weight bundle malformed: {0}")]
    BadBundle(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sidecar error: {0}")]
    Sidecar(#[from] serde_json::Error),
}

/// Verified pretrained backbone weights plus the normalization statistics
/// of their pretraining corpus.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub backbone_id: String,
    pub arch: BackboneArch,
    /// Backbone parameters (name → tensor), head stripped.
    pub tensors: Vec<(String, ArrayD<f32>)>,
    pub norm_mean: [f32; 3],
    pub norm_std: [f32; 3],
    pub checksum: String,
    pub source: String,
    pub cache_path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    backbone_id: String,
    source: String,
    checksum: String,
    fetched_at_unix: u64,
}

/// `$FUNDUS_CACHE_DIR`, else `$XDG_CACHE_HOME/fundus`, else
/// `~/.cache/fundus`.
pub fn default_cache_dir() -> PathBuf {
    if let Ok(dir) = std::env::var(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    if let Ok(xdg) = std::env::var("XDG_CACHE_HOME") {
        return PathBuf::from(xdg).join("fundus");
    }
    let home = std::env::var("HOME").unwrap_or_else(|_| ".".to_string());
    PathBuf::from(home).join(".cache").join("fundus")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn source_label(source: &WeightSource) -> String {
    match source {
        WeightSource::Url { url } => url.clone(),
        WeightSource::BuiltinPretrain { recipe } => format!("builtin:{recipe}"),
    }
}

fn obtain(entry: &RegistryEntry) -> Result<Vec<u8>, FetchError> {
    match &entry.source {
        WeightSource::Url { url } => {
            if let Some(path) = url.strip_prefix("file://") {
                return Ok(std::fs::read(path)?);
            }
            if url.starts_with("http://") || url.starts_with("https://") {
                let response = ureq::get(url).call().map_err(|e| FetchError::Network {
                    url: url.clone(),
                    message: e.to_string(),
                })?;
                let mut bytes = Vec::new();
                response
                    .into_reader()
                    .read_to_end(&mut bytes)
                    .map_err(|e| FetchError::Network {
                        url: url.clone(),
                        message: e.to_string(),
                    })?;
                return Ok(bytes);
            }
            // bare filesystem path
            Ok(std::fs::read(url)?)
        }
        WeightSource::BuiltinPretrain { recipe } => {
            Ok(pretrain::generate_bundle_bytes(&entry.arch, recipe)?)
        }
    }
}

fn parse_bundle(
    entry: &RegistryEntry,
    bytes: &[u8],
    checksum: String,
    cache_path: PathBuf,
) -> Result<WeightBundle, FetchError> {
    let all = read_archive_bytes(bytes)?;
    let mut norm_mean = None;
    let mut norm_std = None;
    let mut tensors = Vec::new();
    for (name, t) in all {
        match name.as_str() {
            "norm.mean" => norm_mean = Some(t),
            "norm.std" => norm_std = Some(t),
            _ => tensors.push((name, t)),
        }
    }
    let to3 = |t: Option<ArrayD<f32>>, what: &str| -> Result<[f32; 3], FetchError> {
        let t = t.ok_or_else(|| FetchError::BadBundle(format!("missing {what}")))?;
        if t.len() != 3 {
            return Err(FetchError::BadBundle(format!("{what} must have 3 entries")));
        }
        Ok([t[[0]], t[[1]], t[[2]]])
    };
    let norm_mean = to3(norm_mean, "norm.mean")?;
    let norm_std = to3(norm_std, "norm.std")?;
    for wanted in entry.arch.param_names() {
        if !tensors.iter().any(|(n, _)| *n == wanted) {
            return Err(FetchError::BadBundle(format!("missing tensor {wanted}")));
        }
    }
    Ok(WeightBundle {
        backbone_id: entry.backbone_id.clone(),
        arch: entry.arch.clone(),
        tensors,
        norm_mean,
        norm_std,
        checksum,
        source: source_label(&entry.source),
        cache_path,
    })
}

fn cached_candidates(dir: &Path, pinned: Option<&str>) -> Vec<PathBuf> {
    if let Some(sum) = pinned {
        let p = dir.join(format!("{sum}.bin"));
        return if p.is_file() { vec![p] } else { Vec::new() };
    }
    let Ok(rd) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out: Vec<PathBuf> = rd
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "bin").unwrap_or(false))
        .collect();
    out.sort();
    out
}

fn evict(path: &Path) {
    let _ = std::fs::remove_file(path);
    let _ = std::fs::remove_file(path.with_extension("json"));
}

/// Return the verified bundle for `backbone_id`, downloading (or
/// generating, for builtin sources) into the cache on a miss. A corrupted
/// cache entry is evicted and fetched once more before giving up.
pub fn fetch_pretrained_from(
    backbone_id: &str,
    cache_dir: &Path,
    registry: &Registry,
) -> Result<WeightBundle, FetchError> {
    let entry = registry
        .get(backbone_id)
        .ok_or_else(|| FetchError::UnknownBackbone(backbone_id.to_string()))?;
    let dir = cache_dir.join(backbone_id);
    let pinned = entry.checksum.as_deref();

    // warm path
    for path in cached_candidates(&dir, pinned) {
        let bytes = std::fs::read(&path)?;
        let got = sha256_hex(&bytes);
        let expected = match pinned {
            Some(sum) => Some(sum.to_string()),
            None => std::fs::read_to_string(path.with_extension("json"))
                .ok()
                .and_then(|s| serde_json::from_str::<Sidecar>(&s).ok())
                .map(|s| s.checksum),
        };
        match expected {
            Some(expected) if expected == got => {
                return parse_bundle(entry, &bytes, got, path);
            }
            _ => evict(&path), // corrupted or unverifiable: drop and refetch
        }
    }

    // cold path
    let bytes = obtain(entry)?;
    let got = sha256_hex(&bytes);
    if let Some(expected) = pinned {
        if got != expected {
            return Err(FetchError::Integrity {
                backbone_id: backbone_id.to_string(),
                expected: expected.to_string(),
                got,
            });
        }
    }
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{got}.bin"));
    std::fs::write(&path, &bytes)?;
    let sidecar = Sidecar {
        backbone_id: backbone_id.to_string(),
        source: source_label(&entry.source),
        checksum: got.clone(),
        fetched_at_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    parse_bundle(entry, &bytes, got, path)
}

/// [`fetch_pretrained_from`] with the bundled registry and default cache.
pub fn fetch_pretrained(backbone_id: &str, cache_dir: &Path) -> Result<WeightBundle, FetchError> {
    fetch_pretrained_from(backbone_id, cache_dir, &Registry::bundled())
}

#[cfg(test)]
pub(crate) fn parse_bundle_for_tests(
    entry: &RegistryEntry,
    bytes: &[u8],
    checksum: String,
) -> Result<WeightBundle, FetchError> {
    parse_bundle(entry, bytes, checksum, PathBuf::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::backbone::BackboneArch;
    use crate::models::pretrain::RECIPE_V1;

    fn toy_arch() -> BackboneArch {
        BackboneArch {
            id: "toy".into(),
            stem_width: 4,
            block_widths: vec![8],
        }
    }

    fn file_entry(blob: &Path, checksum: Option<String>) -> RegistryEntry {
        RegistryEntry {
            backbone_id: "toy".into(),
            arch: toy_arch(),
            source: WeightSource::Url {
                url: format!("file://{}", blob.display()),
            },
            checksum,
        }
    }

    fn toy_bundle_bytes() -> Vec<u8> {
        static BYTES: std::sync::OnceLock<Vec<u8>> = std::sync::OnceLock::new();
        BYTES
            .get_or_init(|| pretrain::generate_bundle_bytes(&toy_arch(), RECIPE_V1).unwrap())
            .clone()
    }

    #[test]
    fn unknown_backbone_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = fetch_pretrained_from("nope", dir.path(), &Registry::empty()).unwrap_err();
        assert!(matches!(err, FetchError::UnknownBackbone(_)));
    }

    #[test]
    fn cold_fetch_populates_cache_then_warm_hit_reuses_it() {
        let bytes = toy_bundle_bytes();
        let sum = sha256_hex(&bytes);
        let dir = tempfile::tempdir().unwrap();
        let blob = dir.path().join("weights.bin");
        std::fs::write(&blob, &bytes).unwrap();

        let mut reg = Registry::empty();
        reg.insert(file_entry(&blob, Some(sum.clone())));
        let cache = dir.path().join("cache");

        let bundle = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        assert_eq!(bundle.checksum, sum);
        assert!(bundle.cache_path.is_file());
        assert!(bundle.cache_path.with_extension("json").is_file());
        assert_eq!(bundle.norm_std.len(), 3);

        // remove the original blob: a warm hit must not need the source
        std::fs::remove_file(&blob).unwrap();
        let again = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        assert_eq!(again.checksum, sum);
    }

    #[test]
    fn corrupted_cache_entry_is_evicted_and_refetched() {
        let bytes = toy_bundle_bytes();
        let sum = sha256_hex(&bytes);
        let dir = tempfile::tempdir().unwrap();
        let blob = dir.path().join("weights.bin");
        std::fs::write(&blob, &bytes).unwrap();

        let mut reg = Registry::empty();
        reg.insert(file_entry(&blob, Some(sum.clone())));
        let cache = dir.path().join("cache");

        let bundle = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        std::fs::write(&bundle.cache_path, b"scrambled").unwrap();

        let again = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        assert_eq!(again.checksum, sum);
        assert_eq!(std::fs::read(&again.cache_path).unwrap(), bytes);
    }

    #[test]
    fn pinned_checksum_rejects_tampered_source() {
        let bytes = toy_bundle_bytes();
        let sum = sha256_hex(&bytes);
        let dir = tempfile::tempdir().unwrap();
        let blob = dir.path().join("weights.bin");
        let mut tampered = bytes.clone();
        let last = tampered.len() - 1;
        tampered[last] ^= 0xFF;
        std::fs::write(&blob, &tampered).unwrap();

        let mut reg = Registry::empty();
        reg.insert(file_entry(&blob, Some(sum)));
        let err = fetch_pretrained_from("toy", &dir.path().join("cache"), &reg).unwrap_err();
        assert!(matches!(err, FetchError::Integrity { .. }));
    }

    #[test]
    fn unpinned_source_records_checksum_on_first_use() {
        let bytes = toy_bundle_bytes();
        let dir = tempfile::tempdir().unwrap();
        let blob = dir.path().join("weights.bin");
        std::fs::write(&blob, &bytes).unwrap();

        let mut reg = Registry::empty();
        reg.insert(file_entry(&blob, None));
        let cache = dir.path().join("cache");

        let first = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        // later calls verify against the sidecar, not the source
        std::fs::remove_file(&blob).unwrap();
        let second = fetch_pretrained_from("toy", &cache, &reg).unwrap();
        assert_eq!(first.checksum, second.checksum);
    }
}
