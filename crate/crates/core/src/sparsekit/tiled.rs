use std::collections::HashMap;

use super::coo::{CooMatrix, DenseVector};
use crate::error::{Error, Result};
use crate::exec::{self, Exec};

pub const DEFAULT_TILE_SIZE: usize = 16;

const MAX_TILE_SIZE: usize = 1 << 16;
const MATVEC_CHUNK: usize = 256;

/// One deduplicated `T x T` block. Nonzeros are kept as row-major local
/// coordinates; [`Tile::to_block`] expands to the dense block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    row_ptr: Vec<u32>,
    entries: Vec<(u16, u16, f64)>,
}

impl Tile {
    fn from_entries(tile_size: usize, entries: Vec<(u16, u16, f64)>) -> Self {
        let mut row_ptr = vec![0u32; tile_size + 1];
        for &(r, _, _) in &entries {
            row_ptr[r as usize + 1] += 1;
        }
        for r in 0..tile_size {
            row_ptr[r + 1] += row_ptr[r];
        }
        Tile { row_ptr, entries }
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u16, u16, f64)] {
        &self.entries
    }

    fn row(&self, r: usize) -> &[(u16, u16, f64)] {
        &self.entries[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize]
    }

    /// Dense row-major `T x T` block.
    pub fn to_block(&self, tile_size: usize) -> Vec<f64> {
        let mut b = vec![0.0; tile_size * tile_size];
        for &(r, c, v) in &self.entries {
            b[r as usize * tile_size + c as usize] = v;
        }
        b
    }

    /// Serialized size: `u32` count plus `(u16, u16, f64)` per nonzero.
    pub fn stored_bytes(&self) -> usize {
        4 + 12 * self.entries.len()
    }
}

/// Sparse matrix cut into a grid of `T x T` cells, where bitwise-identical
/// cells share one entry of the tile dictionary. The matrix is logically
/// zero-padded up to a multiple of `T`; absent cells are zero blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledMatrix {
    rows: usize,
    cols: usize,
    tile_size: usize,
    grid_rows: usize,
    grid_cols: usize,
    grid: Vec<Option<u32>>,
    tiles: Vec<Tile>,
}

impl TiledMatrix {
    /// Tiles `m` with blocks of side `tile_size`.
    pub fn from_coo(m: &CooMatrix, tile_size: usize) -> Result<Self> {
        if tile_size == 0 || tile_size > MAX_TILE_SIZE {
            return Err(Error::Parameter(format!(
                "tile size must be in 1..={MAX_TILE_SIZE}, got {tile_size}"
            )));
        }
        let t = tile_size;
        let grid_rows = m.rows().div_ceil(t);
        let grid_cols = m.cols().div_ceil(t);
        let mut grid = vec![None; grid_rows * grid_cols];
        let mut tiles = Vec::new();
        let mut index: HashMap<Vec<(u16, u16, u64)>, u32> = HashMap::new();

        for gr in 0..grid_rows {
            let mut cells: Vec<Vec<(u16, u16, f64)>> = vec![Vec::new(); grid_cols];
            for r in gr * t..((gr + 1) * t).min(m.rows()) {
                let (cols, vals) = m.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    cells[c / t].push(((r % t) as u16, (c % t) as u16, v));
                }
            }
            for (gc, cell) in cells.into_iter().enumerate() {
                if cell.is_empty() {
                    continue;
                }
                let key: Vec<(u16, u16, u64)> =
                    cell.iter().map(|&(r, c, v)| (r, c, v.to_bits())).collect();
                let id = *index.entry(key).or_insert_with(|| {
                    tiles.push(Tile::from_entries(t, cell));
                    (tiles.len() - 1) as u32
                });
                grid[gr * grid_cols + gc] = Some(id);
            }
        }
        Ok(TiledMatrix {
            rows: m.rows(),
            cols: m.cols(),
            tile_size,
            grid_rows,
            grid_cols,
            grid,
            tiles,
        })
    }

    pub(crate) fn from_parts(
        rows: usize,
        cols: usize,
        tile_size: usize,
        tiles: Vec<Vec<(u16, u16, f64)>>,
        cells: Vec<(u32, u32)>,
    ) -> Result<Self> {
        if tile_size == 0 || tile_size > MAX_TILE_SIZE {
            return Err(Error::Format(format!("bad tile size {tile_size}")));
        }
        let grid_rows = rows.div_ceil(tile_size);
        let grid_cols = cols.div_ceil(tile_size);
        let mut grid = vec![None; grid_rows * grid_cols];
        for (cell, id) in cells {
            let cell = cell as usize;
            if cell >= grid.len() || id as usize >= tiles.len() {
                return Err(Error::Format(format!("grid cell {cell} -> tile {id} out of range")));
            }
            grid[cell] = Some(id);
        }
        let tiles = tiles
            .into_iter()
            .map(|e| {
                let sorted = e.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1));
                let in_range = e
                    .iter()
                    .all(|&(r, c, v)| (r as usize) < tile_size && (c as usize) < tile_size && v != 0.0);
                if !sorted || !in_range {
                    return Err(Error::Format("tile entries unsorted or out of range".into()));
                }
                Ok(Tile::from_entries(tile_size, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TiledMatrix {
            rows,
            cols,
            tile_size,
            grid_rows,
            grid_cols,
            grid,
            tiles,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    /// Tile id at grid cell `(gr, gc)`, `None` for a zero block.
    pub fn cell(&self, gr: usize, gc: usize) -> Option<u32> {
        self.grid[gr * self.grid_cols + gc]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    /// Number of non-empty grid cells.
    pub fn occupied_cells(&self) -> usize {
        self.grid.iter().filter(|c| c.is_some()).count()
    }

    pub(crate) fn occupied(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.grid
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|id| (i as u32, id)))
    }

    pub fn nnz(&self) -> usize {
        self.grid
            .iter()
            .flatten()
            .map(|&id| self.tiles[id as usize].nnz())
            .sum()
    }

    /// Payload bytes of the serialized form: the tile dictionary plus one
    /// `(u32 cell, u32 tile)` pair per occupied cell.
    pub fn stored_bytes(&self) -> usize {
        self.tiles.iter().map(Tile::stored_bytes).sum::<usize>() + 8 * self.occupied_cells()
    }

    /// Expands back to a [`CooMatrix`]; exact inverse of [`Self::from_coo`].
    pub fn to_coo(&self) -> CooMatrix {
        let t = self.tile_size;
        let per_row = (0..self.rows)
            .map(|r| {
                let (gr, lr) = (r / t, r % t);
                let mut row = Vec::new();
                for gc in 0..self.grid_cols {
                    if let Some(id) = self.cell(gr, gc) {
                        for &(_, c, v) in self.tiles[id as usize].row(lr) {
                            row.push((gc * t + c as usize, v));
                        }
                    }
                }
                row
            })
            .collect();
        CooMatrix::from_sorted_rows(self.rows, self.cols, per_row)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<DenseVector> {
        self.matvec_with(v, Exec::default())
    }

    /// Product with a dense vector. Accumulates each row in ascending global
    /// column order, so the result is bitwise equal to the COO product.
    pub fn matvec_with(&self, v: &[f64], exec: Exec) -> Result<DenseVector> {
        if v.len() != self.cols {
            return Err(Error::shape("tiled matvec", self.cols, v.len()));
        }
        let t = self.tile_size;
        let chunks = exec::map_chunks(exec, self.rows, MATVEC_CHUNK, || (), |_, s, e| {
            (s..e)
                .map(|r| {
                    let (gr, lr) = (r / t, r % t);
                    let mut acc = 0.0;
                    for gc in 0..self.grid_cols {
                        if let Some(id) = self.cell(gr, gc) {
                            let base = gc * t;
                            for &(_, c, a) in self.tiles[id as usize].row(lr) {
                                acc += a * v[base + c as usize];
                            }
                        }
                    }
                    acc
                })
                .collect::<Vec<_>>()
        });
        Ok(chunks.into_iter().flatten().collect())
    }
}
