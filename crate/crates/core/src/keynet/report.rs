//! Numerical checks and statistics over a keyed network.

use rand::Rng;
use serde::Serialize;

use super::{KeyChain, KeyedNetwork};
use crate::error::{Error, Result};
use crate::exec::{map_range, Exec};
use crate::netir::{LoweredLayer, LoweredNetwork};
use crate::rng;
use crate::sparsekit::{TiledMatrix, COO_TRIPLET_BYTES};

#[derive(Debug, Clone, Serialize)]
pub struct HomomorphismReport {
    pub trials: usize,
    pub tol: f64,
    pub max_rel_error: f64,
    /// Worst error at the output of each layer.
    pub per_layer: Vec<f64>,
    /// First layer whose output error exceeds `tol`.
    pub failing_layer: Option<usize>,
    pub passed: bool,
}

/// Compares `A_i x_i` with the keyed activation at every boundary for
/// `trials` random inputs in `[0, 1]`. The error at a boundary is
/// `|A_i x_i - x_hat_i|_inf / (1 + |A_i x_i|_inf)`.
pub fn verify_homomorphism(
    lowered: &LoweredNetwork,
    kn: &KeyedNetwork,
    chain: &KeyChain,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<HomomorphismReport> {
    chain.check_against(lowered)?;
    if kn.layers.len() != lowered.layers.len() {
        return Err(Error::shape("verify_homomorphism layers", lowered.layers.len(), kn.layers.len()));
    }
    let n = lowered.input_shape.len();
    let per_trial = map_range(Exec::default(), trials, |t| -> Result<Vec<f64>> {
        let mut r = rng::split(seed, "verify", t as u64);
        let mut x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        x.push(1.0);
        let plain = lowered.forward_trace(&x)?;
        let keyed = kn.forward_trace_raw(&chain.image_key().apply(&x)?)?;
        plain
            .iter()
            .zip(&keyed)
            .zip(chain.keys())
            .skip(1)
            .map(|((p, k), key)| {
                let expect = key.apply(p)?;
                if expect.len() != k.len() {
                    return Ok(f64::INFINITY);
                }
                let scale = expect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let diff = expect.iter().zip(k).fold(0.0f64, |m, (a, b)| {
                    let d = (a - b).abs();
                    if d.is_nan() {
                        f64::INFINITY
                    } else {
                        m.max(d)
                    }
                });
                Ok(diff / (1.0 + scale))
            })
            .collect()
    });
    let mut per_layer = vec![0.0f64; lowered.layers.len()];
    for errs in per_trial {
        for (acc, e) in per_layer.iter_mut().zip(errs?) {
            *acc = acc.max(e);
        }
    }
    let max_rel_error = per_layer.iter().copied().fold(0.0, f64::max);
    let failing_layer = per_layer.iter().position(|&e| e > tol);
    Ok(HomomorphismReport {
        trials,
        tol,
        max_rel_error,
        per_layer,
        failing_layer,
        passed: failing_layer.is_none(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerMemory {
    pub layer: usize,
    pub kind: &'static str,
    /// Nonzeros of the plain linear block (`dim` for a ReLU).
    pub plain_nnz: usize,
    pub keyed_nnz: usize,
    pub ratio: f64,
    pub coo_bytes: usize,
    pub tiled_bytes: usize,
    pub occupied_tiles: usize,
    pub unique_tiles: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemoryReport {
    pub tile_size: usize,
    pub layers: Vec<LayerMemory>,
    pub plain_nnz: usize,
    pub keyed_nnz: usize,
    pub coo_bytes: usize,
    pub tiled_bytes: usize,
}

/// Storage cost of each keyed layer, COO versus tiled.
pub fn memory_stats(kn: &KeyedNetwork, lowered: &LoweredNetwork, tile_size: usize) -> Result<MemoryReport> {
    if kn.layers.len() != lowered.layers.len() {
        return Err(Error::shape("memory_stats layers", lowered.layers.len(), kn.layers.len()));
    }
    let mut layers = Vec::with_capacity(kn.layers.len());
    for (i, (k, p)) in kn.layers.iter().zip(&lowered.layers).enumerate() {
        let plain_nnz = match p {
            LoweredLayer::Affine(a) => a.linear_block().nnz(),
            LoweredLayer::Relu(s) => s.len(),
        };
        let block = k.affine().linear_block();
        let tiled = TiledMatrix::from_coo(&block, tile_size)?;
        layers.push(LayerMemory {
            layer: i,
            kind: k.kind(),
            plain_nnz,
            keyed_nnz: block.nnz(),
            ratio: block.nnz() as f64 / plain_nnz.max(1) as f64,
            coo_bytes: block.nnz() * COO_TRIPLET_BYTES,
            tiled_bytes: tiled.stored_bytes(),
            occupied_tiles: tiled.occupied_cells(),
            unique_tiles: tiled.tiles().len(),
        });
    }
    Ok(MemoryReport {
        tile_size,
        plain_nnz: layers.iter().map(|l| l.plain_nnz).sum(),
        keyed_nnz: layers.iter().map(|l| l.keyed_nnz).sum(),
        coo_bytes: layers.iter().map(|l| l.coo_bytes).sum(),
        tiled_bytes: layers.iter().map(|l| l.tiled_bytes).sum(),
        layers,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsityRow {
    pub layer: usize,
    pub plain_nnz: usize,
    pub keyed_nnz: usize,
    /// `alpha_out * alpha_in * plain_nnz` for the two adjacent keys.
    pub bound: usize,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SparsityAudit {
    pub alpha: usize,
    pub layers: Vec<SparsityRow>,
    /// Every layer satisfies `keyed_nnz <= alpha^2 * plain_nnz`.
    pub holds: bool,
}

/// Checks the fill-in of every keyed layer against the key sparsity.
pub fn sparsity_audit(kn: &KeyedNetwork, lowered: &LoweredNetwork, chain: &KeyChain) -> Result<SparsityAudit> {
    chain.check_against(lowered)?;
    let mem = memory_stats(kn, lowered, crate::sparsekit::DEFAULT_TILE_SIZE)?;
    let keys = chain.keys();
    let alpha = chain.alpha();
    let layers: Vec<SparsityRow> = mem
        .layers
        .iter()
        .map(|l| {
            let bound = keys[l.layer + 1].alpha() * keys[l.layer].alpha() * l.plain_nnz;
            SparsityRow {
                layer: l.layer,
                plain_nnz: l.plain_nnz,
                keyed_nnz: l.keyed_nnz,
                bound,
                within_bound: l.keyed_nnz <= bound,
            }
        })
        .collect();
    let holds = layers.iter().all(|l| l.within_bound && l.keyed_nnz <= alpha * alpha * l.plain_nnz);
    Ok(SparsityAudit { alpha, layers, holds })
}
