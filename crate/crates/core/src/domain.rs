//! Value types shared by every stage: transducer, transmit sequence, medium,
//! image grid, thin-screen aberrator, and the validated scene that bundles them.
//!
//! Coordinates follow the usual linear-array convention: `x` is lateral (along
//! the array), `z` is depth into the medium, the array face sits at `z = 0`.
//! Angles are radians everywhere inside the library.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest transmit tilt accepted, in radians (small-angle regime).
pub const MAX_TILT: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransducerConfig {
    pub n_elements: usize,
    /// Element pitch in meters.
    pub pitch: f64,
    /// Center frequency in Hz.
    pub f0: f64,
    /// Gaussian spectral width (standard deviation) in Hz.
    pub bandwidth_sigma: f64,
    /// Sampling rate in Hz.
    pub fs: f64,
    /// Lateral position of the first element center, meters.
    pub element_x0: f64,
}

impl TransducerConfig {
    /// Array with its aperture centered on `x = 0`.
    pub fn centered(n_elements: usize, pitch: f64, f0: f64, bandwidth_sigma: f64, fs: f64) -> Self {
        Self {
            n_elements,
            pitch,
            f0,
            bandwidth_sigma,
            fs,
            element_x0: -0.5 * (n_elements.saturating_sub(1)) as f64 * pitch,
        }
    }

    pub fn element_x(&self, e: usize) -> f64 {
        self.element_x0 + e as f64 * self.pitch
    }

    /// Distance between the outermost element centers.
    pub fn aperture_width(&self) -> f64 {
        self.n_elements.saturating_sub(1) as f64 * self.pitch
    }

    pub fn aperture_center(&self) -> f64 {
        self.element_x0 + 0.5 * self.aperture_width()
    }

    pub fn wavelength(&self, medium: &MediumConfig) -> f64 {
        medium.c / self.f0
    }

    /// Temporal standard deviation of the Gaussian pulse envelope.
    pub fn pulse_sigma_t(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.bandwidth_sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 8 {
            return Err(Error::invalid(format!(
                "transducer needs >= 8 elements, got {}",
                self.n_elements
            )));
        }
        check_positive("pitch", self.pitch)?;
        check_positive("f0", self.f0)?;
        check_positive("bandwidth_sigma", self.bandwidth_sigma)?;
        if self.bandwidth_sigma >= self.f0 {
            return Err(Error::invalid("bandwidth_sigma must be smaller than f0"));
        }
        check_positive("fs", self.fs)?;
        if self.fs < 4.0 * self.f0 * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "sampling rate {} Hz below 4 x f0 = {} Hz",
                self.fs,
                4.0 * self.f0
            )));
        }
        if !self.element_x0.is_finite() {
            return Err(Error::invalid("element_x0 must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngleSpacing {
    /// Equal steps in angle.
    #[default]
    Angle,
    /// Equal steps in sin(angle).
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    /// Transmit tilts in radians, strictly increasing.
    pub angles: Vec<f64>,
    /// Pair separation index.
    pub m: usize,
}

impl SequenceConfig {
    pub fn new(angles: Vec<f64>, m: usize) -> Self {
        Self { angles, m }
    }

    /// `count` tilts spread symmetrically over `[-max_angle, max_angle]`.
    pub fn symmetric(count: usize, max_angle: f64, spacing: AngleSpacing, m: usize) -> Self {
        let angles = if count == 1 {
            vec![0.0]
        } else {
            (0..count)
                .map(|i| {
                    let t = -1.0 + 2.0 * i as f64 / (count - 1) as f64;
                    match spacing {
                        AngleSpacing::Angle => t * max_angle,
                        AngleSpacing::Sine => (t * max_angle.sin()).asin(),
                    }
                })
                .collect()
        };
        Self { angles, m }
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Number of tilt pairs `(n, n + m)` for separation `m`.
    pub fn pair_count(&self, m: usize) -> usize {
        self.angles.len().saturating_sub(m)
    }

    /// Midline angle of pair `(n, n + m)`, zero-based `n`.
    pub fn theta_c(&self, n: usize, m: usize) -> f64 {
        0.5 * (self.angles[n] + self.angles[n + m])
    }

    /// Angular separation of pair `(n, n + m)`, zero-based `n`.
    pub fn theta_d(&self, n: usize, m: usize) -> f64 {
        self.angles[n + m] - self.angles[n]
    }

    pub fn mean_theta_d(&self, m: usize) -> f64 {
        let pairs = self.pair_count(m);
        (0..pairs).map(|n| self.theta_d(n, m)).sum::<f64>() / pairs as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.angles.len();
        if n < 2 {
            return Err(Error::invalid(format!("need >= 2 angles, got {n}")));
        }
        if let Some(a) = self.angles.iter().find(|a| !a.is_finite()) {
            return Err(Error::invalid(format!("angle {a} is not finite")));
        }
        if let Some(a) = self.angles.iter().find(|a| a.abs() > MAX_TILT) {
            return Err(Error::invalid(format!(
                "angle {a:.4} rad exceeds paraxial limit of {MAX_TILT} rad"
            )));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("angles must be strictly increasing"));
        }
        if self.m < 1 || self.m > n - 1 {
            return Err(Error::invalid(format!(
                "pair separation m = {} outside 1..={}",
                self.m,
                n - 1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumConfig {
    /// Background speed of sound, m/s.
    pub c: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self { c: 1540.0 }
    }
}

impl MediumConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("c", self.c)
    }
}

/// Regular x-z pixel grid. Images are indexed `[ix][iz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    pub z0: f64,
    pub dz: f64,
    pub nz: usize,
}

impl ImageGrid {
    pub fn new(x0: f64, dx: f64, nx: usize, z0: f64, dz: f64, nz: usize) -> Self {
        Self { x0, dx, nx, z0, dz, nz }
    }

    /// Grid covering `[x_min, x_max] x [z_min, z_max]` with the given steps.
    pub fn spanning(x_min: f64, x_max: f64, dx: f64, z_min: f64, z_max: f64, dz: f64) -> Self {
        let nx = ((x_max - x_min) / dx).round() as usize + 1;
        let nz = ((z_max - z_min) / dz).round() as usize + 1;
        Self::new(x_min, dx, nx, z_min, dz, nz)
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x0 + ix as f64 * self.dx
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z0 + iz as f64 * self.dz
    }

    pub fn x_last(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn z_last(&self) -> f64 {
        self.z(self.nz - 1)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.nz)
    }

    /// Row index whose depth equals `z` up to rounding, if any.
    pub fn row_at(&self, z: f64) -> Option<usize> {
        let p = (z - self.z0) / self.dz;
        let r = p.round();
        if r >= 0.0 && (r as usize) < self.nz && (p - r).abs() < 1e-9 {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Closest row to depth `z`, clamped to the grid.
    pub fn nearest_row(&self, z: f64) -> usize {
        ((z - self.z0) / self.dz).round().clamp(0.0, (self.nz - 1) as f64) as usize
    }

    /// Closest column to lateral position `x`, clamped to the grid.
    pub fn nearest_col(&self, x: f64) -> usize {
        ((x - self.x0) / self.dx).round().clamp(0.0, (self.nx - 1) as f64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("dx", self.dx)?;
        check_positive("dz", self.dz)?;
        if self.nx < 2 || self.nz < 2 {
            return Err(Error::invalid(format!(
                "grid needs nx, nz >= 2, got {} x {}",
                self.nx, self.nz
            )));
        }
        if !self.x0.is_finite() || !self.z0.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        if self.z0 < 0.0 {
            return Err(Error::invalid(format!("grid z0 = {} must be >= 0", self.z0)));
        }
        Ok(())
    }
}

/// Thin-screen transmit delay `tau_a(x)` located at depth `depth`.
///
/// Samples are uniform: `x_i = x0 + i * dx`. Outside the sampled range the
/// delay is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AberratorProfile {
    pub depth: f64,
    pub x0: f64,
    pub dx: f64,
    pub delays: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl AberratorProfile {
    pub fn new(depth: f64, x0: f64, dx: f64, delays: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let p = Self { depth, x0, dx, delays, label: label.into() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("profile dx", self.dx)?;
        if self.delays.len() < 2 {
            return Err(Error::invalid("aberrator profile needs >= 2 samples"));
        }
        if !self.depth.is_finite() || !self.x0.is_finite() {
            return Err(Error::invalid("aberrator depth and origin must be finite"));
        }
        if self.delays.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("aberrator delays must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.delays.len()).map(|i| self.x(i)).collect()
    }

    pub fn x_last(&self) -> f64 {
        self.x(self.delays.len() - 1)
    }

    /// Delay at `x` by linear interpolation, zero outside the sampled range.
    pub fn delay_at(&self, x: f64) -> f64 {
        interp_samples(&self.delays, self.x0, self.dx, x)
    }

    /// d tau_a / dx at each sample by central differences (one-sided at the ends).
    pub fn slope_samples(&self) -> Vec<f64> {
        let d = &self.delays;
        let n = d.len();
        (0..n)
            .map(|i| {
                if i == 0 {
                    (d[1] - d[0]) / self.dx
                } else if i == n - 1 {
                    (d[n - 1] - d[n - 2]) / self.dx
                } else {
                    (d[i + 1] - d[i - 1]) / (2.0 * self.dx)
                }
            })
            .collect()
    }

    pub fn max_abs_delay(&self) -> f64 {
        self.delays.iter().fold(0.0, |a, d| a.max(d.abs()))
    }

    /// Lateral extent where the delay is nonzero, if any.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.delays.iter().position(|d| *d != 0.0)?;
        let last = self.delays.iter().rposition(|d| *d != 0.0)?;
        Some((self.x(first), self.x(last)))
    }

    /// Same screen with every delay negated (slow <-> fast).
    pub fn negated(&self) -> Self {
        Self {
            delays: self.delays.iter().map(|d| -d).collect(),
            label: format!("-({})", self.label),
            ..self.clone()
        }
    }

    pub fn with_depth(mut self, depth: f64) -> Self {
        self.depth = depth;
        self
    }
}

/// Linear interpolation of uniformly sampled data, zero outside the samples.
pub(crate) fn interp_samples(samples: &[f64], x0: f64, dx: f64, x: f64) -> f64 {
    let p = (x - x0) / dx;
    let last = (samples.len() - 1) as f64;
    if !(p >= 0.0 && p <= last) {
        return 0.0;
    }
    let i = p.floor() as usize;
    if i + 1 >= samples.len() {
        return samples[samples.len() - 1];
    }
    let f = p - i as f64;
    if f == 0.0 {
        samples[i]
    } else {
        samples[i] * (1.0 - f) + samples[i + 1] * f
    }
}

/// A validated, immutable acquisition + reconstruction setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub transducer: TransducerConfig,
    pub sequence: SequenceConfig,
    pub medium: MediumConfig,
    pub grid: ImageGrid,
    #[serde(default)]
    pub aberrator: Option<AberratorProfile>,
}

impl Scene {
    /// Re-run validation; a valid scene comes back unchanged.
    pub fn validate(self) -> Result<Self> {
        validate_scene(self.transducer, self.sequence, self.medium, self.grid, self.aberrator)
    }

    pub fn wavelength(&self) -> f64 {
        self.transducer.wavelength(&self.medium)
    }

    pub fn with_grid(self, grid: ImageGrid) -> Result<Self> {
        Scene { grid, ..self }.validate()
    }
}

pub fn validate_scene(
    transducer: TransducerConfig,
    sequence: SequenceConfig,
    medium: MediumConfig,
    grid: ImageGrid,
    aberrator: Option<AberratorProfile>,
) -> Result<Scene> {
    transducer.validate()?;
    sequence.validate()?;
    medium.validate()?;
    grid.validate()?;

    let width = transducer.aperture_width();
    let center = transducer.aperture_center();
    if grid.x0 < center - width - 1e-12 || grid.x_last() > center + width + 1e-12 {
        return Err(Error::invalid(format!(
            "grid x-range [{:.4e}, {:.4e}] m extends beyond 2x aperture width around {:.4e} m",
            grid.x0,
            grid.x_last(),
            center
        )));
    }

    if let Some(a) = &aberrator {
        a.validate()?;
        let lambda = transducer.wavelength(&medium);
        if a.dx > 0.25 * lambda * (1.0 + 1e-9) {
            return Err(Error::invalid(format!(
                "aberrator sampling {:.3e} m coarser than lambda0/4 = {:.3e} m",
                a.dx,
                0.25 * lambda
            )));
        }
    }

    Ok(Scene { transducer, sequence, medium, grid, aberrator })
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}
