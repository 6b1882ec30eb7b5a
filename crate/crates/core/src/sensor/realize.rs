use serde::{Deserialize, Serialize};

use super::cmos::{simulate_cmos, CmosConfig, NoiseMode};
use super::fiber::{core_count, simulate_fiber_bundle, FiberBundleConfig};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::keynet::{EncodedImage, KeyedNetwork};
use crate::keys::KeyMatrix;
use crate::netir::{self, Tensor3};

/// Fraction of the ADC range used by the brightest noise-free output.
const ADC_HEADROOM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RealizeMode {
    #[default]
    Exact,
    Approximate,
}

/// Physical parameters implementing a key, for inputs in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub fiber: FiberBundleConfig,
    pub cmos: CmosConfig,
    /// Photons per unit of input intensity. Counts divided by this value
    /// are in the units of `key_apply`.
    pub photon_scale: f64,
    pub exact: bool,
    /// `|A - A_realized|_F / |A|_F` on the linear block, ignoring crosstalk.
    pub mixing_residual: f64,
    pub alpha: usize,
    pub fingerprint: String,
}

/// Maps `key` onto a faceplate with pixel-sized cores and a sensor with
/// per-pixel gain and bias. Geometry comes from `template`, as do the
/// quantum efficiency, dark current and ADC settings.
///
/// A scaled permutation is realized exactly: routing is the permutation,
/// gains are its entries, and biases are offset so the mean dark signal
/// cancels. With `alpha > 1`, `Approximate` routes each output pixel from
/// its dominant source, uses the row sum as gain, and turns the remaining
/// off-dominant mass into uniform crosstalk.
pub fn realize_key(key: &KeyMatrix, template: &CmosConfig, mode: RealizeMode) -> Result<Realization> {
    template.validate()?;
    let shape = template.shape();
    let n = key.dim();
    if shape.len() != n {
        return Err(Error::shape("realize_key", n, shape.len()));
    }
    let exact = key.alpha() == 1 && key.has_permutation_block();
    if !exact && mode == RealizeMode::Exact {
        return Err(Error::UnsupportedExact(key.alpha()));
    }
    if template.quantum_efficiency <= 0.0 {
        return Err(Error::Parameter("quantum efficiency must be > 0 to realize a key".into()));
    }
    let fwd = key.forward();
    let mut source = vec![0usize; n];
    let mut gain = vec![0.0; n];
    let mut off_fraction = 0.0;
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for (j, (src, g)) in source.iter_mut().zip(&mut gain).enumerate() {
        let (cols, vals) = fwd.row(j);
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        let mut sum = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c < n {
                sum += v;
                norm2 += v * v;
                if v > best.1 {
                    best = (c, v);
                }
            }
        }
        if best.0 == usize::MAX {
            return Err(Error::Contract(format!("key row {j} has an empty linear part")));
        }
        *src = best.0;
        *g = sum;
        off_fraction += 1.0 - best.1 / sum;
        for (&c, &v) in cols.iter().zip(vals) {
            if c < n {
                let realized = if c == best.0 { sum } else { 0.0 };
                diff2 += (v - realized) * (v - realized);
            }
        }
    }
    let mut routing = vec![usize::MAX; n];
    for (dst, &src) in source.iter().enumerate() {
        if routing[src] != usize::MAX {
            return Err(Error::Contract(format!("source pixel {src} dominates two output pixels")));
        }
        routing[src] = dst;
    }
    let bias = key.bias();
    let bound = gain.iter().zip(&bias).map(|(g, b)| g + b).fold(0.0, f64::max);
    let photon_scale = if bound > 0.0 {
        ADC_HEADROOM * template.adc_max() / bound
    } else {
        1.0
    };
    let nu = template.quantum_efficiency;
    let dark = template.dark_mean();
    let pixel_gain: Vec<f64> = gain.iter().map(|g| g / nu).collect();
    let pixel_bias: Vec<f64> = pixel_gain
        .iter()
        .zip(&bias)
        .map(|(g, b)| b * photon_scale - g * dark)
        .collect();
    let mut fiber = FiberBundleConfig::identity(shape);
    debug_assert_eq!(core_count(&fiber) * shape.channels, n);
    fiber.routing = Some(routing);
    if !exact {
        let f = off_fraction / n as f64;
        let c = f / (1.0 - f) / 6.0;
        fiber.crosstalk_v = c;
        fiber.crosstalk_h = c;
    }
    Ok(Realization {
        fiber,
        cmos: CmosConfig {
            gain: pixel_gain,
            bias: pixel_bias,
            ..template.clone()
        },
        photon_scale,
        exact,
        mixing_residual: if norm2 > 0.0 { (diff2 / norm2).sqrt() } else { 0.0 },
        alpha: key.alpha(),
        fingerprint: key.fingerprint(),
    })
}

/// Fiber bundle, photon scaling and sensor readout; returns digital counts.
pub fn simulate_pipeline(img: &Tensor3, r: &Realization, seed: u64, noise: NoiseMode, exec: Exec) -> Result<Tensor3> {
    let optical = simulate_fiber_bundle(img, &r.fiber, seed)?;
    let photons = Tensor3::new(optical.shape, optical.data.iter().map(|v| v * r.photon_scale).collect())?;
    simulate_cmos(&photons, &r.cmos, seed, noise, exec)
}

/// Runs the pipeline and rescales the counts into an [`EncodedImage`]
/// bound to the realized key.
pub fn pipeline_encode(img: &Tensor3, r: &Realization, seed: u64, noise: NoiseMode) -> Result<EncodedImage> {
    let counts = simulate_pipeline(img, r, seed, noise, Exec::default())?;
    let mut data: Vec<f64> = counts.data.iter().map(|c| c / r.photon_scale).collect();
    data.push(1.0);
    Ok(EncodedImage {
        data,
        shape: img.shape,
        fingerprint: r.fingerprint.clone(),
    })
}

/// How far keyed inference on simulated sensor output drifts from keyed
/// inference on ideal encodings.
#[derive(Debug, Clone, Serialize)]
pub struct DegradationReport {
    pub images: usize,
    pub exact_realization: bool,
    pub mixing_residual: f64,
    /// Worst per-pixel encoding error, in input units.
    pub max_encoding_error: f64,
    pub max_output_deviation: f64,
    pub mean_output_deviation: f64,
}

pub fn degradation_report(
    kn: &KeyedNetwork,
    key: &KeyMatrix,
    r: &Realization,
    images: &[Tensor3],
    seed: u64,
    noise: NoiseMode,
) -> Result<DegradationReport> {
    let mut max_enc = 0.0f64;
    let mut max_out = 0.0f64;
    let mut sum_out = 0.0;
    let mut count = 0usize;
    for (i, img) in images.iter().enumerate() {
        let ideal = EncodedImage {
            data: key.apply(&netir::vectorize_as(img, kn.input_shape)?)?,
            shape: img.shape,
            fingerprint: key.fingerprint(),
        };
        let sim = pipeline_encode(img, r, seed.wrapping_add(i as u64), noise)?;
        for (a, b) in ideal.data.iter().zip(&sim.data) {
            max_enc = max_enc.max((a - b).abs());
        }
        let ya = kn.forward(&ideal)?;
        let yb = kn.forward(&sim)?;
        for (a, b) in ya.iter().zip(&yb) {
            let d = (a - b).abs();
            max_out = max_out.max(d);
            sum_out += d;
            count += 1;
        }
    }
    Ok(DegradationReport {
        images: images.len(),
        exact_realization: r.exact,
        mixing_residual: r.mixing_residual,
        max_encoding_error: max_enc,
        max_output_deviation: max_out,
        mean_output_deviation: if count > 0 { sum_out / count as f64 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::{gen_key, KeyGenConfig};
    use crate::netir::Shape;

    fn image(shape: Shape) -> Tensor3 {
        let n = shape.len();
        Tensor3::new(shape, (0..n).map(|i| ((i * 37 % 101) as f64) / 100.0).collect()).unwrap()
    }

    fn check_within_one_step(key: &KeyMatrix, template: &CmosConfig) {
        let r = realize_key(key, template, RealizeMode::Exact).unwrap();
        assert!(r.exact);
        assert_eq!(r.mixing_residual, 0.0);
        let img = image(template.shape());
        let counts = simulate_pipeline(&img, &r, 0, NoiseMode::Mean, Exec::Sequential).unwrap();
        let want = key.apply(&netir::vectorize(&img)).unwrap();
        for (c, w) in counts.data.iter().zip(&want) {
            assert!((c - w * r.photon_scale).abs() <= 1.0, "{c} vs {}", w * r.photon_scale);
        }
    }

    #[test]
    fn identity_key_realizes_identity() {
        let shape = Shape::new(1, 4, 4);
        let key = KeyMatrix::identity(16);
        let r = realize_key(&key, &CmosConfig::ideal(shape), RealizeMode::Exact).unwrap();
        assert_eq!(r.fiber.routing, Some((0..16).collect()));
        assert!(r.cmos.gain.iter().all(|&g| g == 1.0));
        check_within_one_step(&key, &CmosConfig::ideal(shape));
    }

    #[test]
    fn alpha_one_key_within_one_adc_step() {
        let shape = Shape::new(1, 8, 8);
        let key = gen_key(&KeyGenConfig::new(64, 1, 4)).unwrap();
        check_within_one_step(&key, &CmosConfig::ideal(shape));
        let physical = CmosConfig {
            quantum_efficiency: 0.6,
            dark_offset: 12.0,
            dark_slope: 3.0,
            integration_time: 2.0,
            ..CmosConfig::ideal(shape)
        };
        check_within_one_step(&key, &physical);
    }

    #[test]
    fn mixing_key_needs_approximate_mode() {
        let shape = Shape::new(1, 8, 8);
        let key = gen_key(&KeyGenConfig::new(64, 2, 4)).unwrap();
        let t = CmosConfig::ideal(shape);
        assert!(matches!(realize_key(&key, &t, RealizeMode::Exact), Err(Error::UnsupportedExact(2))));
        let r = realize_key(&key, &t, RealizeMode::Approximate).unwrap();
        assert!(!r.exact);
        assert!(r.mixing_residual > 0.0 && r.mixing_residual < 1.0);
        assert!(r.fiber.crosstalk_h > 0.0);
    }
}
