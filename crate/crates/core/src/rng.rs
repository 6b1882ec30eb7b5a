//! Deterministic, splittable random streams.
//!
//! All randomness in the crate flows from a `u64` seed through ChaCha20.
//! Independent sub-streams are derived by hashing the parent seed with a
//! label, so adding a new consumer never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type KeyRng = ChaCha20Rng;

/// Root generator for `seed`.
pub fn from_seed(seed: u64) -> KeyRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Derives a child seed from `(seed, label, index)`.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// Generator for the named sub-stream `(label, index)` of `seed`.
pub fn split(seed: u64, label: &str, index: u64) -> KeyRng {
    from_seed(derive_seed(seed, label, index))
}

/// Generator for row `row` of a per-row parallel computation. Uses the
/// ChaCha stream id so rows are independent of how work is partitioned.
pub fn row_stream(seed: u64, row: u64) -> KeyRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(row);
    rng
}
