//! Ready-made configurations: the desk-scale probe used throughout the tests
//! and the full-size linear array it is shrunk from.

use crate::domain::{
    validate_scene, AngleSpacing, ImageGrid, MediumConfig, Scene, SequenceConfig, TransducerConfig,
};
use crate::error::Result;

pub const C_TISSUE: f64 = 1540.0;
pub const F0: f64 = 5.3e6;
pub const PITCH: f64 = 0.23e-3;
/// Fraction of `f0` used as the Gaussian spectral width when none is given.
pub const BANDWIDTH_FRACTION: f64 = 0.25;

/// 192 elements, 0.23 mm pitch, 5.3 MHz, sampled at 4 x f0.
pub fn full_transducer() -> TransducerConfig {
    TransducerConfig::centered(192, PITCH, F0, BANDWIDTH_FRACTION * F0, 4.0 * F0)
}

/// 128-element shrink of the full-size probe.
pub fn desk_transducer() -> TransducerConfig {
    TransducerConfig::centered(128, PITCH, F0, BANDWIDTH_FRACTION * F0, 4.0 * F0)
}

/// Seven tilts uniformly spaced over +-12 degrees.
pub fn seven_angles(m: usize) -> SequenceConfig {
    SequenceConfig::symmetric(7, 12f64.to_radians(), AngleSpacing::Angle, m)
}

pub fn lambda0() -> f64 {
    C_TISSUE / F0
}

/// 192 x 256 grid at half-pitch lateral spacing covering `[z_min, z_max]`.
pub fn desk_grid(z_min: f64, z_max: f64) -> ImageGrid {
    let nx = 192;
    let dx = PITCH / 2.0;
    let nz = 256;
    ImageGrid::new(-0.5 * (nx - 1) as f64 * dx, dx, nx, z_min, (z_max - z_min) / (nz - 1) as f64, nz)
}

pub fn desk_scene(grid: ImageGrid) -> Result<Scene> {
    validate_scene(desk_transducer(), seven_angles(1), MediumConfig { c: C_TISSUE }, grid, None)
}
