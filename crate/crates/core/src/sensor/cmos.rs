use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_range, Exec};
use crate::netir::{Shape, Tensor3};
use crate::rng::{self, KeyRng};

/// Poisson means above this are sampled from the matching Gaussian.
const GAUSSIAN_POISSON_THRESHOLD: f64 = 1000.0;

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn sixteen() -> u32 {
    16
}

/// Sensor parameters. Gains convert electrons to digital counts; the bias
/// and ADC noise are in counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmosConfig {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    #[serde(default = "unit")]
    pub quantum_efficiency: f64,
    /// Constant dark electrons `mu_d0`.
    #[serde(default)]
    pub dark_offset: f64,
    /// Read-out variance folded into the dark term, `sigma_d0^2`.
    #[serde(default)]
    pub dark_variance: f64,
    /// Dark electrons per unit integration time, `mu_I`.
    #[serde(default)]
    pub dark_slope: f64,
    #[serde(default)]
    pub integration_time: f64,
    /// Gain used where `gain` is empty.
    #[serde(default = "unit")]
    pub system_gain: f64,
    /// Per-pixel gain; empty means `system_gain` everywhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gain: Vec<f64>,
    /// Per-pixel analog offset; empty means zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<f64>,
    #[serde(default = "sixteen")]
    pub adc_bits: u32,
    /// ADC noise variance `sigma_q^2`.
    #[serde(default)]
    pub adc_noise_var: f64,
}

/// `Stochastic` draws every noise source; `Mean` returns expected values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Stochastic,
    Mean,
}

impl CmosConfig {
    /// Noise-free unit-gain sensor.
    pub fn ideal(shape: Shape) -> Self {
        CmosConfig {
            height: shape.height,
            width: shape.width,
            channels: shape.channels,
            quantum_efficiency: 1.0,
            dark_offset: 0.0,
            dark_variance: 0.0,
            dark_slope: 0.0,
            integration_time: 0.0,
            system_gain: 1.0,
            gain: Vec::new(),
            bias: Vec::new(),
            adc_bits: 16,
            adc_noise_var: 0.0,
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.shape().len();
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::Parameter(format!(
                "quantum efficiency {} outside [0, 1]",
                self.quantum_efficiency
            )));
        }
        if self.integration_time.is_nan() || self.integration_time < 0.0 {
            return Err(Error::Parameter("integration time must be >= 0".into()));
        }
        if !(8..=16).contains(&self.adc_bits) {
            return Err(Error::Parameter(format!("ADC depth {} outside [8, 16]", self.adc_bits)));
        }
        if !(self.dark_offset >= 0.0 && self.dark_variance >= 0.0 && self.dark_slope >= 0.0) {
            return Err(Error::Parameter("dark current parameters must be >= 0".into()));
        }
        if self.adc_noise_var.is_nan() || self.adc_noise_var < 0.0 {
            return Err(Error::Parameter("ADC noise variance must be >= 0".into()));
        }
        if !self.gain.is_empty() && self.gain.len() != n {
            return Err(Error::shape("CmosConfig gain", n, self.gain.len()));
        }
        if !self.bias.is_empty() && self.bias.len() != n {
            return Err(Error::shape("CmosConfig bias", n, self.bias.len()));
        }
        Ok(())
    }

    pub fn pixel_gain(&self, i: usize) -> f64 {
        self.gain.get(i).copied().unwrap_or(self.system_gain)
    }

    pub fn pixel_bias(&self, i: usize) -> f64 {
        self.bias.get(i).copied().unwrap_or(0.0)
    }

    /// Mean dark electrons `mu_d = mu_d0 + mu_I * t_int`.
    pub fn dark_mean(&self) -> f64 {
        self.dark_offset + self.dark_slope * self.integration_time
    }

    /// Dark variance `sigma_d^2 = sigma_d0^2 + mu_I * t_int`.
    pub fn dark_var(&self) -> f64 {
        self.dark_variance + self.dark_slope * self.integration_time
    }

    /// Largest representable count.
    pub fn adc_max(&self) -> f64 {
        ((1u64 << self.adc_bits) - 1) as f64
    }
}

/// Closed-form `(mean, variance)` of the pre-quantization signal of pixel
/// `i` under `photons` incident photons: `G (mu_e + mu_d) + bias` and
/// `G^2 sigma_d^2 + sigma_q^2 + G^2 mu_e`.
pub fn cmos_moments(cfg: &CmosConfig, photons: f64, i: usize) -> (f64, f64) {
    let g = cfg.pixel_gain(i);
    let mu_e = cfg.quantum_efficiency * photons;
    let mean = g * (mu_e + cfg.dark_mean()) + cfg.pixel_bias(i);
    let var = g * g * cfg.dark_var() + cfg.adc_noise_var + g * g * mu_e;
    (mean, var)
}

fn poisson(rng: &mut KeyRng, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else if mean > GAUSSIAN_POISSON_THRESHOLD {
        let z: f64 = StandardNormal.sample(rng);
        mean + mean.sqrt() * z
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng)
    }
}

fn gaussian(rng: &mut KeyRng, var: f64) -> f64 {
    if var > 0.0 {
        Normal::new(0.0, var.sqrt()).expect("finite variance").sample(rng)
    } else {
        0.0
    }
}

/// Pre-quantization signal in counts. Each image row draws from its own
/// stream, so results do not depend on `exec`.
pub fn simulate_cmos_analog(photons: &Tensor3, cfg: &CmosConfig, seed: u64, mode: NoiseMode, exec: Exec) -> Result<Tensor3> {
    cfg.validate()?;
    if photons.shape != cfg.shape() {
        return Err(Error::shape("simulate_cmos", cfg.shape(), photons.shape));
    }
    if let Some(p) = photons.data.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(Error::Parameter(format!("photon count {p} is negative")));
    }
    let w = cfg.width;
    let n_rows = cfg.channels * cfg.height;
    let stream_seed = rng::derive_seed(seed, "cmos", 0);
    let dark_shot = cfg.dark_slope * cfg.integration_time;
    let rows = map_range(exec, n_rows, |row| {
        let mut r = rng::row_stream(stream_seed, row as u64);
        (0..w)
            .map(|x| {
                let i = row * w + x;
                let g = cfg.pixel_gain(i);
                let mu_e = cfg.quantum_efficiency * photons.data[i];
                match mode {
                    NoiseMode::Mean => g * (mu_e + cfg.dark_mean()) + cfg.pixel_bias(i),
                    NoiseMode::Stochastic => {
                        let e = poisson(&mut r, mu_e);
                        let dark = cfg.dark_offset + poisson(&mut r, dark_shot) + gaussian(&mut r, cfg.dark_variance);
                        g * (e + dark) + cfg.pixel_bias(i) + gaussian(&mut r, cfg.adc_noise_var)
                    }
                }
            })
            .collect::<Vec<f64>>()
    });
    Tensor3::new(photons.shape, rows.concat())
}

/// Digital counts: the analog signal rounded and clipped to the ADC range.
pub fn simulate_cmos(photons: &Tensor3, cfg: &CmosConfig, seed: u64, mode: NoiseMode, exec: Exec) -> Result<Tensor3> {
    let mut t = simulate_cmos_analog(photons, cfg, seed, mode, exec)?;
    let max = cfg.adc_max();
    for v in &mut t.data {
        *v = v.round().clamp(0.0, max);
    }
    Ok(t)
}
