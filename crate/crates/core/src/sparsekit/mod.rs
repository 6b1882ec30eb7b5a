//! Sparse matrix kernels.
//!
//! [`CooMatrix`] is the universal carrier for layer weights, keys and keyed
//! layers. [`TiledMatrix`] is a compressed variant that stores repeated
//! `T x T` sub-blocks once. Both serialize to little-endian blobs (`KSPM` and
//! `KSTM` respectively).

mod blob;
mod coo;
mod tiled;

pub use coo::{CooMatrix, DenseVector};
pub use tiled::{Tile, TiledMatrix, DEFAULT_TILE_SIZE};

/// Bytes a single `(u64 row, u64 col, f64 value)` triplet occupies in a
/// naive COO encoding.
pub const COO_TRIPLET_BYTES: usize = 24;
