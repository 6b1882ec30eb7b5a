use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netir::{Shape, Tensor3};

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// Faceplate geometry and crosstalk. Lengths are in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberBundleConfig {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default)]
    pub pad: usize,
    #[serde(default = "one")]
    pub core_rows: usize,
    #[serde(default = "one")]
    pub core_cols: usize,
    /// Transmitting core area over total cell area, in `(0, 1]`.
    #[serde(default = "unit")]
    pub core_ratio: f64,
    /// Extra horizontal core offset per core row.
    #[serde(default)]
    pub shear: f64,
    /// Value written to pixels outside every core.
    #[serde(default)]
    pub blocking: f64,
    #[serde(default)]
    pub crosstalk_v: f64,
    #[serde(default)]
    pub crosstalk_h: f64,
    /// `routing[src] = dst` over the active cores of all channels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<Vec<usize>>,
}

impl FiberBundleConfig {
    /// Pixel-sized cores with no loss, crosstalk or routing.
    pub fn identity(shape: Shape) -> Self {
        FiberBundleConfig {
            height: shape.height,
            width: shape.width,
            channels: shape.channels,
            pad: 0,
            core_rows: 1,
            core_cols: 1,
            core_ratio: 1.0,
            shear: 0.0,
            blocking: 0.0,
            crosstalk_v: 0.0,
            crosstalk_h: 0.0,
            routing: None,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.core_rows == 0 || self.core_cols == 0 {
            return Err(Error::Parameter("core size must be at least 1 px".into()));
        }
        if self.core_rows > self.height || self.core_cols > self.width {
            return Err(Error::Parameter(format!(
                "core {}x{} larger than image {}x{}",
                self.core_rows, self.core_cols, self.height, self.width
            )));
        }
        if !(self.core_ratio > 0.0 && self.core_ratio <= 1.0) {
            return Err(Error::Parameter(format!("core ratio {} outside (0, 1]", self.core_ratio)));
        }
        if !(0.0..=1.0).contains(&self.blocking) {
            return Err(Error::Parameter(format!("blocking value {} outside [0, 1]", self.blocking)));
        }
        if !(self.crosstalk_v >= 0.0 && self.crosstalk_h >= 0.0) {
            return Err(Error::Parameter("crosstalk coefficients must be >= 0".into()));
        }
        if !self.shear.is_finite() {
            return Err(Error::Parameter("shear must be finite".into()));
        }
        Ok(())
    }
}

/// Transmitting area of one core, clipped to the image, half-open.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Core {
    grid_row: usize,
    center_x: f64,
    y0: usize,
    y1: usize,
    x0: usize,
    x1: usize,
}

impl Core {
    fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }
}

/// Active cores of one channel plane in grid order. Core rows are offset by
/// half a core on odd rows plus the accumulated shear.
pub(crate) fn layout(cfg: &FiberBundleConfig) -> Vec<Core> {
    let (cr, cc) = (cfg.core_rows as i64, cfg.core_cols as i64);
    let (h, w, pad) = (cfg.height as i64, cfg.width as i64, cfg.pad as i64);
    let th = ((cr as f64 * cfg.core_ratio.sqrt()).round() as i64).clamp(1, cr);
    let tw = ((cc as f64 * cfg.core_ratio.sqrt()).round() as i64).clamp(1, cc);
    let (oy, ox) = ((cr - th) / 2, (cc - tw) / 2);
    let n_rows = (h + 2 * pad + cr - 1) / cr;
    let n_cols = (w + 2 * pad + cc - 1) / cc + 2;
    let mut cores = Vec::new();
    for r in 0..n_rows {
        let brick = (r % 2) * (cc / 2);
        let offset = (brick + (cfg.shear * r as f64).round() as i64).rem_euclid(cc);
        let top = -pad + r * cr;
        for k in 0..n_cols {
            let left = -pad - cc + offset + k * cc;
            let y0 = (top + oy).max(0);
            let y1 = (top + oy + th).min(h);
            let x0 = (left + ox).max(0);
            let x1 = (left + ox + tw).min(w);
            if y0 < y1 && x0 < x1 {
                cores.push(Core {
                    grid_row: r as usize,
                    center_x: left as f64 + cc as f64 / 2.0,
                    y0: y0 as usize,
                    y1: y1 as usize,
                    x0: x0 as usize,
                    x1: x1 as usize,
                });
            }
        }
    }
    cores
}

/// Neighbor lists `(vertical, horizontal)` per core: the adjacent cores in
/// the same grid row, and the two cores with nearest centers in each of the
/// rows above and below.
fn neighbors(cores: &[Core]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n_rows = cores.last().map_or(0, |c| c.grid_row + 1);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_rows];
    for (i, c) in cores.iter().enumerate() {
        rows[c.grid_row].push(i);
    }
    cores
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let row = &rows[c.grid_row];
            let pos = row.iter().position(|&j| j == i).unwrap();
            let mut horiz = Vec::with_capacity(2);
            if pos > 0 {
                horiz.push(row[pos - 1]);
            }
            if pos + 1 < row.len() {
                horiz.push(row[pos + 1]);
            }
            let mut vert = Vec::with_capacity(4);
            for adj in [c.grid_row.checked_sub(1), Some(c.grid_row + 1)].into_iter().flatten() {
                let Some(other) = rows.get(adj) else { continue };
                let mut by_dist: Vec<usize> = other.clone();
                by_dist.sort_by(|&a, &b| {
                    let da = (cores[a].center_x - c.center_x).abs();
                    let db = (cores[b].center_x - c.center_x).abs();
                    da.total_cmp(&db).then(cores[a].center_x.total_cmp(&cores[b].center_x))
                });
                vert.extend(by_dist.into_iter().take(2));
            }
            (vert, horiz)
        })
        .collect()
}

/// Runs the faceplate model on `img`.
///
/// Each active core carries the total intensity of its transmitting pixels
/// to its destination core, where it is spread evenly. Without routing this
/// is the per-core mean. Crosstalk then adds `c_v` times the four vertical
/// and `c_h` times the two horizontal neighbors to each core, and the result
/// is rescaled so its maximum equals the pre-crosstalk maximum. `seed` is
/// accepted for interface symmetry; the model is deterministic.
pub fn simulate_fiber_bundle(img: &Tensor3, cfg: &FiberBundleConfig, _seed: u64) -> Result<Tensor3> {
    cfg.validate()?;
    if img.shape != cfg.shape() {
        return Err(Error::shape("simulate_fiber_bundle", cfg.shape(), img.shape));
    }
    let cores = layout(cfg);
    let per_plane = cores.len();
    let total = per_plane * cfg.channels;
    if let Some(r) = &cfg.routing {
        check_routing(r, total)?;
    }
    let (h, w) = (cfg.height, cfg.width);
    let flux: Vec<f64> = (0..total)
        .map(|g| {
            let (c, core) = (g / per_plane, &cores[g % per_plane]);
            let mut s = 0.0;
            for y in core.y0..core.y1 {
                for x in core.x0..core.x1 {
                    s += img.data[(c * h + y) * w + x];
                }
            }
            s
        })
        .collect();
    let mut values = vec![0.0; total];
    for (src, &f) in flux.iter().enumerate() {
        let dst = cfg.routing.as_ref().map_or(src, |r| r[src]);
        values[dst] = f / cores[dst % per_plane].area() as f64;
    }
    if cfg.crosstalk_v > 0.0 || cfg.crosstalk_h > 0.0 {
        let nbrs = neighbors(&cores);
        let before = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mixed: Vec<f64> = (0..total)
            .map(|g| {
                let base = g - g % per_plane;
                let (vert, horiz) = &nbrs[g % per_plane];
                let sv: f64 = vert.iter().map(|&j| values[base + j]).sum();
                let sh: f64 = horiz.iter().map(|&j| values[base + j]).sum();
                values[g] + cfg.crosstalk_v * sv + cfg.crosstalk_h * sh
            })
            .collect();
        let after = mixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = if after > 0.0 && before > 0.0 { before / after } else { 1.0 };
        values = mixed.into_iter().map(|v| v * scale).collect();
    }
    let mut out = vec![cfg.blocking; img.data.len()];
    for (g, &v) in values.iter().enumerate() {
        let (c, core) = (g / per_plane, &cores[g % per_plane]);
        for y in core.y0..core.y1 {
            for x in core.x0..core.x1 {
                out[(c * h + y) * w + x] = v;
            }
        }
    }
    Tensor3::new(img.shape, out)
}

fn check_routing(r: &[usize], n: usize) -> Result<()> {
    if r.len() != n {
        return Err(Error::shape("fiber routing map", n, r.len()));
    }
    let mut seen = vec![false; n];
    for &d in r {
        if d >= n || std::mem::replace(&mut seen[d], true) {
            return Err(Error::Parameter("fiber routing map is not a permutation".into()));
        }
    }
    Ok(())
}

/// Number of active cores per channel plane.
pub(crate) fn core_count(cfg: &FiberBundleConfig) -> usize {
    layout(cfg).len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor3 {
        Tensor3::new(Shape::new(1, h, w), (0..h * w).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn identity_configuration_is_bit_exact() {
        let img = Tensor3::new(Shape::new(2, 5, 7), (0..70).map(|i| (i as f64 * 0.31).sin().abs()).collect()).unwrap();
        let out = simulate_fiber_bundle(&img, &FiberBundleConfig::identity(img.shape), 0).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = Tensor3::new(Shape::new(1, 9, 11), vec![0.3; 99]).unwrap();
        for (cr, cc) in [(2, 2), (3, 2), (1, 4)] {
            let cfg = FiberBundleConfig {
                core_rows: cr,
                core_cols: cc,
                ..FiberBundleConfig::identity(img.shape)
            };
            let out = simulate_fiber_bundle(&img, &cfg, 0).unwrap();
            assert!(out.data.iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn two_by_two_cores_match_pooling_on_even_rows() {
        // Odd core rows are shifted by one column, so only the even rows
        // line up with a plain 2x2 pooling grid.
        let img = ramp(4, 4);
        let cfg = FiberBundleConfig {
            core_rows: 2,
            core_cols: 2,
            ..FiberBundleConfig::identity(img.shape)
        };
        let out = simulate_fiber_bundle(&img, &cfg, 0).unwrap();
        assert_eq!(out.at(0, 0, 0), (0.0 + 1.0 + 4.0 + 5.0) / 4.0);
        assert_eq!(out.at(0, 1, 3), (2.0 + 3.0 + 6.0 + 7.0) / 4.0);
        // Row 1 of cores: cells start at columns -1, 1, 3.
        assert_eq!(out.at(0, 2, 0), (8.0 + 12.0) / 2.0);
        assert_eq!(out.at(0, 3, 2), (9.0 + 10.0 + 13.0 + 14.0) / 4.0);
        assert_eq!(out.at(0, 3, 3), (11.0 + 15.0) / 2.0);
    }

    #[test]
    fn routing_permutes_cores() {
        let img = ramp(2, 2);
        let cfg = FiberBundleConfig {
            routing: Some(vec![3, 2, 1, 0]),
            ..FiberBundleConfig::identity(img.shape)
        };
        let out = simulate_fiber_bundle(&img, &cfg, 0).unwrap();
        assert_eq!(out.data, vec![3.0, 2.0, 1.0, 0.0]);
        let bad = FiberBundleConfig {
            routing: Some(vec![0, 0, 1, 2]),
            ..cfg
        };
        assert!(simulate_fiber_bundle(&img, &bad, 0).is_err());
    }

    #[test]
    fn blocking_fills_cladding() {
        let img = Tensor3::new(Shape::new(1, 6, 6), vec![1.0; 36]).unwrap();
        let cfg = FiberBundleConfig {
            core_rows: 3,
            core_cols: 3,
            core_ratio: 0.2,
            blocking: 0.25,
            ..FiberBundleConfig::identity(img.shape)
        };
        let out = simulate_fiber_bundle(&img, &cfg, 0).unwrap();
        assert!(out.data.contains(&0.25));
        assert!(out.data.contains(&1.0));
        assert_eq!(out.at(0, 0, 0), 0.25);
        assert_eq!(out.at(0, 1, 1), 1.0);
    }

    #[test]
    fn crosstalk_blurs_and_keeps_max() {
        let mut data = vec![0.0; 25];
        data[12] = 1.0;
        let img = Tensor3::new(Shape::new(1, 5, 5), data).unwrap();
        let cfg = FiberBundleConfig {
            crosstalk_v: 0.1,
            crosstalk_h: 0.2,
            ..FiberBundleConfig::identity(img.shape)
        };
        let out = simulate_fiber_bundle(&img, &cfg, 0).unwrap();
        let max = out.data.iter().copied().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-15);
        assert!((out.at(0, 2, 1) - 0.2).abs() < 1e-15);
        assert!((out.at(0, 1, 2) - 0.1).abs() < 1e-15);
        assert_eq!(out.at(0, 0, 0), 0.0);
    }

    #[test]
    fn oversized_core_rejected() {
        let img = ramp(3, 3);
        let cfg = FiberBundleConfig {
            core_rows: 4,
            ..FiberBundleConfig::identity(img.shape)
        };
        assert!(matches!(simulate_fiber_bundle(&img, &cfg, 0), Err(Error::Parameter(_))));
    }
}
