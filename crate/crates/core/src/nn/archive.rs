//! Flat binary tensor archive.
//!
//! Layout: 8-byte magic, little-endian u64 manifest length, JSON manifest
//! (name, shape, dtype, byte offset per tensor), then raw little-endian f32
//! data. Serialization is deterministic for a given tensor list, so archive
//! bytes can be checksummed.

use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"FNTENSO1";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a tensor archive (bad magic)")]
    BadMagic,
    #[error("archive truncated")]
    Truncated,
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(String),
    #[error("tensor {name} shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor {0} missing from archive")]
    MissingTensor(String),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    /// Byte offset into the data section.
    offset: u64,
}

pub fn archive_to_bytes(tensors: &[(String, ArrayD<f32>)]) -> Vec<u8> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f32".to_string(),
            offset,
        });
        offset += (t.len() * 4) as u64;
    }
    let manifest = serde_json::to_vec(&entries).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + manifest.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    for (_, t) in tensors {
        let owned;
        let slice = match t.as_slice() {
            Some(s) => s,
            None => {
                owned = t.iter().copied().collect::<Vec<f32>>();
                &owned
            }
        };
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_archive_bytes(bytes: &[u8]) -> Result<Vec<(String, ArrayD<f32>)>, ArchiveError> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + mlen {
        return Err(ArchiveError::Truncated);
    }
    let entries: Vec<ManifestEntry> = serde_json::from_slice(&bytes[16..16 + mlen])?;
    let data = &bytes[16 + mlen..];
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        if e.dtype != "f32" {
            return Err(ArchiveError::UnsupportedDtype(e.dtype));
        }
        let len: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + len * 4;
        if end > data.len() {
            return Err(ArchiveError::Truncated);
        }
        let values: Vec<f32> = data[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = ArrayD::from_shape_vec(ndarray::IxDyn(&e.shape), values)
            .map_err(|_| ArchiveError::ShapeMismatch {
                name: e.name.clone(),
                expected: e.shape.clone(),
                got: vec![len],
            })?;
        out.push((e.name, t));
    }
    Ok(out)
}

pub fn save_archive(path: &Path, tensors: &[(String, ArrayD<f32>)]) -> Result<(), ArchiveError> {
    std::fs::write(path, archive_to_bytes(tensors))?;
    Ok(())
}

pub fn load_archive(path: &Path) -> Result<Vec<(String, ArrayD<f32>)>, ArchiveError> {
    read_archive_bytes(&std::fs::read(path)?)
}
