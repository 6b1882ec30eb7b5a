//! On-disk keynet container: `manifest.json` plus one `KSPM` (or tiled
//! `KSTM`) blob per layer. Keys are never written here.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KeyedLayer, KeyedNetwork};
use crate::error::{Error, Result};
use crate::netir::{Shape, SparseAffine};
use crate::sparsekit::{CooMatrix, TiledMatrix};
use crate::store::{self, BlobRef};

pub const KEYNET_MANIFEST: &str = "manifest.json";
const KEYNET_FORMAT: &str = "keynet";

#[derive(Debug, Serialize, Deserialize)]
struct KeynetManifest {
    format: String,
    version: u32,
    alpha: usize,
    fingerprint: String,
    input_shape: Shape,
    output_shape: Shape,
    layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Encoding {
    Kspm,
    Kstm,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    kind: String,
    in_shape: Shape,
    out_shape: Shape,
    nnz: usize,
    encoding: Encoding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tile_size: Option<usize>,
    blob: BlobRef,
}

/// Digest check result for one stored layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerIntegrity {
    pub layer: usize,
    pub file: String,
    pub digest_ok: bool,
}

impl KeyedNetwork {
    /// Writes the container. With `tile_size`, layers are stored tiled.
    pub fn save(&self, dir: &Path, tile_size: Option<usize>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.affine();
            let (encoding, blob) = match tile_size {
                Some(t) => {
                    let tiled = TiledMatrix::from_coo(&a.matrix, t)?;
                    (Encoding::Kstm, BlobRef::write(dir, &format!("layer{i:03}.kstm"), &tiled.to_kstm_bytes())?)
                }
                None => (
                    Encoding::Kspm,
                    BlobRef::write(dir, &format!("layer{i:03}.kspm"), &a.matrix.to_kspm_bytes())?,
                ),
            };
            layers.push(LayerEntry {
                kind: layer.kind().to_string(),
                in_shape: a.in_shape,
                out_shape: a.out_shape,
                nnz: a.matrix.nnz(),
                encoding,
                tile_size,
                blob,
            });
        }
        store::write_json(
            &dir.join(KEYNET_MANIFEST),
            &KeynetManifest {
                format: KEYNET_FORMAT.into(),
                version: 1,
                alpha: self.alpha,
                fingerprint: self.fingerprint.clone(),
                input_shape: self.input_shape,
                output_shape: self.output_shape,
                layers,
            },
        )
    }

    /// Loads a container, failing on any digest mismatch.
    pub fn load(dir: &Path) -> Result<Self> {
        let (kn, integrity) = Self::load_unverified(dir)?;
        if let Some(bad) = integrity.iter().find(|i| !i.digest_ok) {
            return Err(Error::Integrity(format!("layer {} ({})", bad.layer, bad.file)));
        }
        Ok(kn)
    }

    /// Loads a container and reports per-layer digest status instead of
    /// failing, so a tampered layer can still be localized numerically.
    pub fn load_unverified(dir: &Path) -> Result<(Self, Vec<LayerIntegrity>)> {
        let m: KeynetManifest = store::read_json(&dir.join(KEYNET_MANIFEST))?;
        if m.format != KEYNET_FORMAT {
            return Err(Error::Format(format!("not a keynet container: {}", m.format)));
        }
        let mut layers = Vec::with_capacity(m.layers.len());
        let mut integrity = Vec::with_capacity(m.layers.len());
        for (i, e) in m.layers.iter().enumerate() {
            let bytes = e.blob.read_unchecked(dir)?;
            integrity.push(LayerIntegrity {
                layer: i,
                file: e.blob.file.clone(),
                digest_ok: store::sha256_hex(&bytes) == e.blob.sha256,
            });
            let matrix = match e.encoding {
                Encoding::Kspm => CooMatrix::from_kspm_bytes(&bytes),
                Encoding::Kstm => TiledMatrix::from_kstm_bytes(&bytes).map(|t| t.to_coo()),
            }
            .map_err(|err| Error::Format(format!("layer {i} ({}): {err}", e.blob.file)))?;
            let affine = SparseAffine::new(matrix, e.in_shape, e.out_shape)?;
            layers.push(match e.kind.as_str() {
                "linear" => KeyedLayer::Linear(affine),
                "relu" => KeyedLayer::Relu(affine),
                other => return Err(Error::UnsupportedLayer(other.to_string())),
            });
        }
        Ok((
            KeyedNetwork {
                layers,
                fingerprint: m.fingerprint,
                alpha: m.alpha,
                input_shape: m.input_shape,
                output_shape: m.output_shape,
            },
            integrity,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keynet::{assign_keys, build_keynet};
    use crate::netir::{lower_network, zoo};

    fn sample() -> KeyedNetwork {
        let net = zoo::mixed_small(5);
        let chain = assign_keys(&net, 2, 5, false).unwrap();
        build_keynet(&lower_network(&net).unwrap(), &chain).unwrap()
    }

    #[test]
    fn roundtrip_plain_and_tiled() {
        let kn = sample();
        for tile in [None, Some(4)] {
            let dir = tempfile::tempdir().unwrap();
            kn.save(dir.path(), tile).unwrap();
            let back = KeyedNetwork::load(dir.path()).unwrap();
            assert_eq!(back.fingerprint, kn.fingerprint);
            for (a, b) in back.layers.iter().zip(&kn.layers) {
                assert_eq!(a.kind(), b.kind());
                assert!(a.affine().matrix.bit_eq(&b.affine().matrix));
            }
        }
    }

    #[test]
    fn tamper_is_detected() {
        let kn = sample();
        let dir = tempfile::tempdir().unwrap();
        kn.save(dir.path(), None).unwrap();
        let f = dir.path().join("layer003.kspm");
        let mut bytes = std::fs::read(&f).unwrap();
        // low mantissa byte of the first stored value
        bytes[32 + 16] ^= 0x10;
        std::fs::write(&f, bytes).unwrap();
        assert!(matches!(KeyedNetwork::load(dir.path()), Err(Error::Integrity(_))));
        let (_, integrity) = KeyedNetwork::load_unverified(dir.path()).unwrap();
        assert_eq!(integrity.iter().filter(|i| !i.digest_ok).count(), 1);
        assert!(!integrity[3].digest_ok);
    }
}
