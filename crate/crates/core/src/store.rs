//! Shared helpers for on-disk containers: blob hashing and checked reads.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reference from a JSON manifest to a sibling binary blob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub file: String,
    pub sha256: String,
}

impl BlobRef {
    /// Writes `bytes` to `dir/file` and returns the reference.
    pub fn write(dir: &Path, file: &str, bytes: &[u8]) -> Result<Self> {
        fs::write(dir.join(file), bytes)?;
        Ok(BlobRef {
            file: file.to_string(),
            sha256: sha256_hex(bytes),
        })
    }

    /// Reads the blob and checks its digest.
    pub fn read(&self, dir: &Path) -> Result<Vec<u8>> {
        let bytes = self.read_unchecked(dir)?;
        if sha256_hex(&bytes) != self.sha256 {
            return Err(Error::Integrity(self.file.clone()));
        }
        Ok(bytes)
    }

    pub fn read_unchecked(&self, dir: &Path) -> Result<Vec<u8>> {
        if self.file.contains('/') || self.file.contains('\\') || self.file.starts_with('.') {
            return Err(Error::Format(format!("blob name `{}` escapes container", self.file)));
        }
        Ok(fs::read(dir.join(&self.file))?)
    }

    pub fn verify(&self, dir: &Path) -> Result<bool> {
        Ok(sha256_hex(&self.read_unchecked(dir)?) == self.sha256)
    }
}

/// Serializes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}

pub(crate) fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format(format!(
            "f64 blob length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
