//! Model containers: a directory holding `manifest.json` plus one f64
//! little-endian blob per weight tensor, or a flat JSON file with inline
//! weights (convenient for tiny nets).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, LayerSpec, LayerWeights, NetworkDef, Shape, REJECTED_LAYER_KINDS};
use crate::error::{Error, Result};
use crate::store::{self, BlobRef};

pub const MODEL_MANIFEST: &str = "manifest.json";
const MODEL_FORMAT: &str = "keynet-model";

#[derive(Debug, Serialize, Deserialize)]
struct ModelManifest {
    format: String,
    version: u32,
    input_shape: Shape,
    layers: Vec<ManifestLayer>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLayer {
    #[serde(flatten)]
    spec: LayerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel_blob: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_blob: Option<BlobRef>,
}

/// Rejects layer kinds that cannot be keyed before typed deserialization,
/// so the error names the offending kind.
fn check_layer_kinds(value: &serde_json::Value) -> Result<()> {
    let Some(layers) = value.get("layers").and_then(|l| l.as_array()) else {
        return Err(Error::Format("model has no `layers` array".into()));
    };
    for l in layers {
        let kind = l
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::Format("layer without `kind`".into()))?;
        let known = ["conv2d", "avg_pool", "dense", "relu"];
        if !known.contains(&kind) {
            let lower = kind.to_ascii_lowercase();
            let named = REJECTED_LAYER_KINDS.iter().find(|r| **r == lower).copied();
            return Err(Error::UnsupportedLayer(named.unwrap_or(kind).to_string()));
        }
    }
    Ok(())
}

impl NetworkDef {
    /// Parses the flat JSON form and validates shapes.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        check_layer_kinds(&value)?;
        let net: NetworkDef = serde_json::from_value(value)?;
        net.boundary_shapes()?;
        Ok(net)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes a model container directory.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let blob = |name: &str, v: &[f64]| -> Result<Option<BlobRef>> {
                if v.is_empty() {
                    return Ok(None);
                }
                BlobRef::write(dir, &format!("layer{i:02}_{name}.f64"), &store::f64s_to_bytes(v)).map(Some)
            };
            layers.push(ManifestLayer {
                spec: layer.spec.clone(),
                kernel_blob: blob("kernel", &layer.weights.kernel)?,
                bias_blob: blob("bias", &layer.weights.bias)?,
            });
        }
        let manifest = ModelManifest {
            format: MODEL_FORMAT.into(),
            version: 1,
            input_shape: self.input_shape,
            layers,
        };
        store::write_json(&dir.join(MODEL_MANIFEST), &manifest)
    }

    /// Loads a model container directory, verifying blob digests.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MODEL_MANIFEST))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        check_layer_kinds(&value)?;
        let manifest: ModelManifest = serde_json::from_value(value)?;
        if manifest.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a model container: {}", manifest.format)));
        }
        let read = |b: &Option<BlobRef>| -> Result<Vec<f64>> {
            match b {
                Some(b) => store::bytes_to_f64s(&b.read(dir)?),
                None => Ok(Vec::new()),
            }
        };
        let layers = manifest
            .layers
            .iter()
            .map(|l| {
                Ok(Layer {
                    spec: l.spec.clone(),
                    weights: LayerWeights {
                        kernel: read(&l.kernel_blob)?,
                        bias: read(&l.bias_blob)?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let net = NetworkDef {
            input_shape: manifest.input_shape,
            layers,
        };
        net.boundary_shapes()?;
        Ok(net)
    }

    /// Loads either a container directory or a flat JSON file.
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Self::load_dir(path)
        } else {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        }
    }
}
