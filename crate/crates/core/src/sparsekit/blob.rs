//! Little-endian binary encodings.
//!
//! `KSPM`: magic, `u32` version, `u64` rows, `u64` cols, `u64` nnz, then nnz
//! `(u64 row, u64 col, f64 value)` triplets.
//!
//! `KSTM`: magic, `u32` version, `u64` rows, `u64` cols, `u32` tile size,
//! `u64` tile count, then per tile a `u32` nnz followed by
//! `(u16 row, u16 col, f64 value)` entries, then `u64` occupied-cell count
//! and `(u32 cell, u32 tile)` pairs with `cell = grid_row * grid_cols + grid_col`.

use super::coo::CooMatrix;
use super::tiled::TiledMatrix;
use crate::error::{Error, Result};

pub const KSPM_MAGIC: &[u8; 4] = b"KSPM";
pub const KSTM_MAGIC: &[u8; 4] = b"KSTM";
const VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated blob: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size overflows usize".into()))
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!(
                "bad magic, expected {}",
                String::from_utf8_lossy(magic)
            )));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

impl CooMatrix {
    pub fn to_kspm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 24 * self.nnz());
        out.extend_from_slice(KSPM_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u64).to_le_bytes());
        out.extend_from_slice(&(self.nnz() as u64).to_le_bytes());
        for (r, c, v) in self.entries() {
            out.extend_from_slice(&(r as u64).to_le_bytes());
            out.extend_from_slice(&(c as u64).to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a `KSPM` blob, rejecting unsorted, duplicate, zero or
    /// out-of-range entries.
    pub fn from_kspm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { buf: bytes, pos: 0 };
        rd.header(KSPM_MAGIC)?;
        let rows = rd.usize()?;
        let cols = rd.usize()?;
        let nnz = rd.usize()?;
        if nnz.checked_mul(24) != Some(bytes.len().saturating_sub(32)) {
            return Err(Error::Format(format!("nnz {nnz} does not match blob length")));
        }
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut prev: Option<(usize, usize)> = None;
        for _ in 0..nnz {
            let r = rd.usize()?;
            let c = rd.usize()?;
            let v = rd.f64()?;
            if r >= rows || c >= cols {
                return Err(Error::Format(format!("entry ({r}, {c}) out of bounds")));
            }
            if prev.is_some_and(|p| p >= (r, c)) {
                return Err(Error::Format("entries not strictly row-major sorted".into()));
            }
            if v == 0.0 {
                return Err(Error::Format(format!("explicit zero at ({r}, {c})")));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        rd.finish()?;
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(CooMatrix::from_raw_parts(rows, cols, row_ptr, col_idx, values))
    }
}

impl TiledMatrix {
    pub fn to_kstm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + self.stored_bytes());
        out.extend_from_slice(KSTM_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u64).to_le_bytes());
        out.extend_from_slice(&(self.tile_size() as u32).to_le_bytes());
        out.extend_from_slice(&(self.tiles().len() as u64).to_le_bytes());
        for tile in self.tiles() {
            out.extend_from_slice(&(tile.nnz() as u32).to_le_bytes());
            for &(r, c, v) in tile.entries() {
                out.extend_from_slice(&r.to_le_bytes());
                out.extend_from_slice(&c.to_le_bytes());
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.occupied_cells() as u64).to_le_bytes());
        for (cell, id) in self.occupied() {
            out.extend_from_slice(&cell.to_le_bytes());
            out.extend_from_slice(&id.to_le_bytes());
        }
        out
    }

    pub fn from_kstm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { buf: bytes, pos: 0 };
        rd.header(KSTM_MAGIC)?;
        let rows = rd.usize()?;
        let cols = rd.usize()?;
        let tile_size = rd.u32()? as usize;
        let n_tiles = rd.usize()?;
        let mut tiles = Vec::new();
        for _ in 0..n_tiles {
            let n = rd.u32()? as usize;
            let mut e = Vec::with_capacity(n.min(bytes.len() / 12));
            for _ in 0..n {
                e.push((rd.u16()?, rd.u16()?, rd.f64()?));
            }
            tiles.push(e);
        }
        let n_cells = rd.usize()?;
        let mut cells = Vec::with_capacity(n_cells.min(bytes.len() / 8));
        for _ in 0..n_cells {
            cells.push((rd.u32()?, rd.u32()?));
        }
        rd.finish()?;
        TiledMatrix::from_parts(rows, cols, tile_size, tiles, cells)
    }
}
