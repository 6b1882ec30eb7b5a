//! Simulated optics and readout: a fiber bundle faceplate followed by a
//! CMOS sensor with analog gain and bias, plus the mapping from an image
//! key onto those physical parameters.
//!
//! Images enter the fiber bundle as intensities (nominally in `[0, 1]`),
//! are scaled to photon counts, and leave the sensor as digital counts.

mod cmos;
mod fiber;
mod realize;

pub use cmos::{cmos_moments, simulate_cmos, simulate_cmos_analog, CmosConfig, NoiseMode};
pub use fiber::{simulate_fiber_bundle, FiberBundleConfig};
pub use realize::{
    degradation_report, pipeline_encode, realize_key, simulate_pipeline, DegradationReport, RealizeMode,
    Realization,
};
