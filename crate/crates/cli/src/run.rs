//! Per-run bookkeeping shared by all subcommands.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use keynet_core::keynet::{KeyChain, CHAIN_MANIFEST, KEYNET_MANIFEST};
use keynet_core::keys::{KeyMatrix, KEY_MANIFEST};
use keynet_core::netir::{zoo, NetworkDef, MODEL_MANIFEST};
use keynet_core::store;
use serde::Serialize;
use serde_json::Value;

/// Everything needed to reproduce a run. Contains no timestamps, so equal
/// argv yields an equal manifest.
#[derive(Debug, Default, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub params: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, params: Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.into(),
            params,
            ..Default::default()
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.exists() {
            self.inputs.insert(path.display().to_string(), digest(path)?);
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), digest(path)?);
        Ok(())
    }
}

/// SHA-256 of a file, or of the manifest inside a container directory
/// (which itself lists the digests of every blob).
pub fn digest(path: &Path) -> Result<String> {
    if path.is_dir() {
        for name in [KEYNET_MANIFEST, CHAIN_MANIFEST, KEY_MANIFEST, MODEL_MANIFEST] {
            let m = path.join(name);
            if m.is_file() {
                return Ok(store::sha256_hex(&std::fs::read(&m)?));
            }
        }
        bail!("{} is not a recognized container", path.display());
    }
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(store::sha256_hex(&bytes))
}

/// Resolves `zoo:<name>[:<weight seed>]` or a model path.
pub fn load_model(spec: &str) -> Result<NetworkDef> {
    if let Some(rest) = spec.strip_prefix("zoo:") {
        let (name, seed) = match rest.split_once(':') {
            Some((n, s)) => (n, s.parse::<u64>().context("zoo weight seed")?),
            None => (rest, 0),
        };
        return Ok(match name {
            "example" => zoo::keynet_example(),
            "lenet" => zoo::lenet(seed),
            "allconv" => zoo::allconv(seed),
            "linear" => zoo::linear_stack(seed),
            "mixed" => zoo::mixed_small(seed),
            other => bail!("unknown zoo model `{other}` (example, lenet, allconv, linear, mixed)"),
        });
    }
    Ok(NetworkDef::load(Path::new(spec))?)
}

pub fn record_model(m: &mut RunManifest, spec: &str) -> Result<()> {
    if !spec.starts_with("zoo:") {
        m.input(Path::new(spec))?;
    }
    Ok(())
}

/// The image key of a chain directory, or a single key directory.
pub fn load_image_key(dir: &Path) -> Result<KeyMatrix> {
    if dir.join(CHAIN_MANIFEST).is_file() {
        Ok(KeyChain::load(dir)?.image_key().clone())
    } else {
        Ok(KeyMatrix::load(dir)?)
    }
}
