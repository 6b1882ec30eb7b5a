//! Image files: binary PGM (`P5`, 8 or 16 bit) and raw little-endian `f64`
//! with a JSON sidecar, plus a synthetic test image.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keynet::EncodedImage;
use crate::netir::{Shape, Tensor3};
use crate::rng;
use crate::store;

/// Reads a `P5` file. Returns raw sample values and `maxval`.
pub fn read_pgm(path: &Path) -> Result<(Tensor3, u16)> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(Tensor3, u16)> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field {s:?}")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let wide = maxval > 255;
    let need = w * h * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PGM raster has {} bytes, need {need}", bytes.len().saturating_sub(pos))))?;
    let data = if wide {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect()
    } else {
        raster.iter().map(|&b| b as f64).collect()
    };
    Ok((Tensor3::new(Shape::new(1, h, w), data)?, maxval as u16))
}

/// Writes a single-channel image as `P5`, rounding and clamping samples to
/// `[0, maxval]`. `maxval > 255` selects 16-bit samples.
pub fn write_pgm(path: &Path, img: &Tensor3, maxval: u16) -> Result<()> {
    std::fs::write(path, encode_pgm(img, maxval)?)?;
    Ok(())
}

pub fn encode_pgm(img: &Tensor3, maxval: u16) -> Result<Vec<u8>> {
    if img.shape.channels != 1 {
        return Err(Error::shape("PGM channels", 1, img.shape.channels));
    }
    if maxval == 0 {
        return Err(Error::Parameter("PGM maxval must be >= 1".into()));
    }
    let mut out = format!("P5\n{} {}\n{}\n", img.shape.width, img.shape.height, maxval).into_bytes();
    let q = |v: f64| v.round().clamp(0.0, maxval as f64) as u16;
    for &v in &img.data {
        if maxval > 255 {
            out.extend_from_slice(&q(v).to_be_bytes());
        } else {
            out.push(q(v) as u8);
        }
    }
    Ok(out)
}

/// Sidecar describing a raw `f64` image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `img` to `path` and its sidecar to `path.json`.
pub fn write_raw(path: &Path, img: &Tensor3, fingerprint: Option<&str>) -> Result<()> {
    std::fs::write(path, store::f64s_to_bytes(&img.data))?;
    store::write_json(
        &sidecar_path(path),
        &RawSidecar {
            h: img.shape.height,
            w: img.shape.width,
            channels: img.shape.channels,
            fingerprint: fingerprint.map(str::to_owned),
        },
    )
}

pub fn read_raw(path: &Path) -> Result<(Tensor3, Option<String>)> {
    let side: RawSidecar = store::read_json(&sidecar_path(path))?;
    let data = store::bytes_to_f64s(&std::fs::read(path)?)?;
    Ok((Tensor3::new(Shape::new(side.channels, side.h, side.w), data)?, side.fingerprint))
}

/// Stores an encoding without its trailing homogeneous coordinate.
pub fn write_encoded(path: &Path, e: &EncodedImage) -> Result<()> {
    let n = e.shape.len();
    if e.data.len() != n + 1 {
        return Err(Error::shape("write_encoded", n + 1, e.data.len()));
    }
    write_raw(path, &Tensor3::new(e.shape, e.data[..n].to_vec())?, Some(&e.fingerprint))
}

pub fn read_encoded(path: &Path) -> Result<EncodedImage> {
    let (t, fp) = read_raw(path)?;
    let fingerprint = fp.ok_or_else(|| Error::Format(format!("{} has no key fingerprint", path.display())))?;
    let mut data = t.data;
    data.push(1.0);
    Ok(EncodedImage {
        data,
        shape: t.shape,
        fingerprint,
    })
}

/// Loads an image as intensities: PGM samples are divided by `maxval`, raw
/// files are returned as stored.
pub fn load_image(path: &Path) -> Result<Tensor3> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let (mut t, maxval) = read_pgm(path)?;
        for v in &mut t.data {
            *v /= maxval as f64;
        }
        Ok(t)
    } else {
        Ok(read_raw(path)?.0)
    }
}

/// Saves intensities in `[0, 1]` as 16-bit PGM or, for any other
/// extension, as raw `f64`.
pub fn save_image(path: &Path, img: &Tensor3) -> Result<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        let scaled = Tensor3::new(img.shape, img.data.iter().map(|v| v * 65535.0).collect())?;
        write_pgm(path, &scaled, 65535)
    } else {
        write_raw(path, img, None)
    }
}

/// Smooth shading, a few soft blobs and a hard-edged bar, in `[0, 1]`.
/// Has the local correlation of a photograph without shipping one.
pub fn natural_image(h: usize, w: usize, seed: u64) -> Tensor3 {
    let mut r = rng::split(seed, "natural-image", 0);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                r.random_range(0.0..h as f64),
                r.random_range(0.0..w as f64),
                r.random_range(0.08..0.25) * h.max(w) as f64,
                r.random_range(-0.5..0.5),
            )
        })
        .collect();
    let bar = (r.random_range(0.2..0.5) * w as f64, r.random_range(0.6..0.9) * w as f64);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64 / h.max(1) as f64, x as f64 / w.max(1) as f64);
            let mut v = 0.3 + 0.3 * fy + 0.1 * (6.0 * fx).sin();
            for &(cy, cx, s, a) in &blobs {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            if (x as f64) > bar.0 && (x as f64) < bar.1 && fy > 0.4 && fy < 0.6 {
                v += 0.35;
            }
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Tensor3::new(Shape::new(1, h, w), data).expect("shape matches")
}
