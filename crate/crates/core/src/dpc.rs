//! Differential phase contrast: pairwise phase maps between transmit tilts,
//! shear untilting about a chosen depth, angular compounding, and the
//! post-processing used to localize aberrators (filtering, reference
//! subtraction, depth projection, focus scanning, C-mode assembly).
//!
//! Pair indices are zero-based here: pair `n` compares tilt `n` with tilt
//! `n + m`, for `n` in `0..N - m`.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::BeamformedStack;
use crate::domain::{ImageGrid, MAX_TILT};
use crate::error::{Error, Result};
use crate::image::{check_shape, ScalarImage};

/// Default Gaussian filter width, in center-frequency wavelengths.
pub const DEFAULT_FILTER_WAVELENGTHS: f64 = 2.0;

pub fn default_filter_sigma(scene: &crate::domain::Scene) -> f64 {
    DEFAULT_FILTER_WAVELENGTHS * scene.wavelength()
}

/// Common view of the masked real-valued rasters the DPC stage works on.
pub trait Raster: Clone {
    fn grid(&self) -> &ImageGrid;
    fn values(&self) -> &Array2<f64>;
    fn valid(&self) -> &Array2<bool>;
    /// Copy of `self` carrying new pixel data.
    fn with_data(&self, values: Array2<f64>, valid: Array2<bool>) -> Self;
}

impl Raster for ScalarImage {
    fn grid(&self) -> &ImageGrid {
        &self.grid
    }
    fn values(&self) -> &Array2<f64> {
        &self.values
    }
    fn valid(&self) -> &Array2<bool> {
        &self.valid
    }
    fn with_data(&self, values: Array2<f64>, valid: Array2<bool>) -> Self {
        Self { grid: self.grid, values, valid }
    }
}

/// `arg[B_n conj(B_{n+m})]` for one tilt pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePairMap {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
    pub grid: ImageGrid,
    pub n: usize,
    pub m: usize,
    pub theta_c: f64,
    pub theta_d: f64,
}

impl Raster for PhasePairMap {
    fn grid(&self) -> &ImageGrid {
        &self.grid
    }
    fn values(&self) -> &Array2<f64> {
        &self.values
    }
    fn valid(&self) -> &Array2<bool> {
        &self.valid
    }
    fn with_data(&self, values: Array2<f64>, valid: Array2<bool>) -> Self {
        Self { values, valid, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Pipeline,
    ForwardModel,
    ReferenceCorrected,
}

/// Compounded phase contrast `Delta Phi(x, z; z_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcImage {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
    pub grid: ImageGrid,
    pub z_s: f64,
    pub m: usize,
    pub provenance: Provenance,
}

impl Raster for DpcImage {
    fn grid(&self) -> &ImageGrid {
        &self.grid
    }
    fn values(&self) -> &Array2<f64> {
        &self.values
    }
    fn valid(&self) -> &Array2<bool> {
        &self.valid
    }
    fn with_data(&self, values: Array2<f64>, valid: Array2<bool>) -> Self {
        Self { values, valid, ..self.clone() }
    }
}

impl DpcImage {
    pub fn new(grid: ImageGrid, values: Array2<f64>, z_s: f64, m: usize, provenance: Provenance) -> Result<Self> {
        check_shape(&grid, &values)?;
        let valid = Array2::from_elem(values.raw_dim(), true);
        Ok(Self { values, valid, grid, z_s, m, provenance })
    }

    pub fn to_scalar(&self) -> ScalarImage {
        ScalarImage { grid: self.grid, values: self.values.clone(), valid: self.valid.clone() }
    }
}

/// Wrap into `(-pi, pi]`.
pub fn wrap_phase(p: f64) -> f64 {
    let mut w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Argument in `(-pi, pi]`, with `arg(0) = 0`.
pub fn phase_of(v: Complex64) -> f64 {
    if v.re == 0.0 && v.im == 0.0 {
        return 0.0;
    }
    let a = v.im.atan2(v.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

pub fn pair_phase(stack: &BeamformedStack, n: usize, m: usize) -> Result<PhasePairMap> {
    let count = stack.n_angles();
    if m == 0 || m >= count {
        return Err(Error::IndexOutOfRange { index: m, lo: 1, hi: count.saturating_sub(1) });
    }
    if n + m >= count {
        return Err(Error::IndexOutOfRange { index: n, lo: 0, hi: count - m - 1 });
    }
    let a = stack.images.index_axis(Axis(0), n);
    let b = stack.images.index_axis(Axis(0), n + m);
    let mut values = Array2::zeros((stack.grid.nx, stack.grid.nz));
    ndarray::Zip::from(&mut values)
        .and(&a)
        .and(&b)
        .for_each(|v, a, b| *v = phase_of(a * b.conj()));
    let seq = &stack.scene.sequence;
    Ok(PhasePairMap {
        valid: Array2::from_elem(values.raw_dim(), true),
        values,
        grid: stack.grid,
        n,
        m,
        theta_c: seq.theta_c(n, m),
        theta_d: seq.theta_d(n, m),
    })
}

/// Shear about depth `z_s`: `out(x, z) = in(x + theta_c (z - z_s), z)`,
/// linear interpolation along x. Reads outside the image give 0 and clear the
/// validity mask; rows with zero shift are copied unchanged.
pub fn shear_untilt<T: Raster>(img: &T, theta_c: f64, z_s: f64) -> Result<T> {
    if !(theta_c.abs() <= MAX_TILT) {
        return Err(Error::invalid(format!("shear angle {theta_c} exceeds {MAX_TILT} rad")));
    }
    let grid = *img.grid();
    let src = img.values();
    let src_valid = img.valid();
    let mut values = Array2::zeros(src.raw_dim());
    let mut valid = Array2::from_elem(src.raw_dim(), false);
    let last = (grid.nx - 1) as f64;
    for iz in 0..grid.nz {
        let shift = theta_c * (grid.z(iz) - z_s) / grid.dx;
        if shift == 0.0 {
            for ix in 0..grid.nx {
                values[[ix, iz]] = src[[ix, iz]];
                valid[[ix, iz]] = src_valid[[ix, iz]];
            }
            continue;
        }
        for ix in 0..grid.nx {
            let p = ix as f64 + shift;
            if !(p >= 0.0 && p <= last) {
                continue;
            }
            let i = p.floor() as usize;
            let f = p - i as f64;
            if f == 0.0 || i + 1 >= grid.nx {
                values[[ix, iz]] = src[[i, iz]];
                valid[[ix, iz]] = src_valid[[i, iz]];
            } else {
                values[[ix, iz]] = src[[i, iz]] * (1.0 - f) + src[[i + 1, iz]] * f;
                valid[[ix, iz]] = src_valid[[i, iz]] && src_valid[[i + 1, iz]];
            }
        }
    }
    Ok(img.with_data(values, valid))
}

/// Angular compounding: sum over all pairs of the pair maps sheared about `z_s`.
pub fn compound_dpc(stack: &BeamformedStack, m: usize, z_s: f64) -> Result<DpcImage> {
    let pairs = stack.n_angles().saturating_sub(m);
    if m == 0 || pairs == 0 {
        return Err(Error::IndexOutOfRange { index: m, lo: 1, hi: stack.n_angles().saturating_sub(1) });
    }
    let maps: Vec<PhasePairMap> = (0..pairs)
        .into_par_iter()
        .map(|n| {
            let p = pair_phase(stack, n, m)?;
            shear_untilt(&p, p.theta_c, z_s)
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((stack.grid.nx, stack.grid.nz));
    let mut valid = Array2::from_elem(values.raw_dim(), true);
    for p in &maps {
        values += &p.values;
        ndarray::Zip::from(&mut valid).and(&p.valid).for_each(|a, b| *a &= *b);
    }
    Ok(DpcImage { values, valid, grid: stack.grid, z_s, m, provenance: Provenance::Pipeline })
}

fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    let half = (3.0 * sigma_px).ceil() as isize;
    (-half..=half)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma_px * sigma_px)).exp())
        .collect()
}

fn convolve_axis(data: &Array2<f64>, kernel: &[f64], axis: Axis) -> Array2<f64> {
    let half = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros(data.raw_dim());
    for (src, mut dst) in data.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = src.len() as isize;
        for i in 0..n {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = i + k as isize - half;
                if j >= 0 && j < n {
                    acc += w * src[j as usize];
                }
            }
            dst[i as usize] = acc;
        }
    }
    out
}

/// Separable Gaussian blur, `sigma` in meters (converted per axis through
/// `dx`, `dz`). The kernel is truncated at 3 sigma and renormalized over the
/// valid in-bounds pixels.
pub fn gaussian_filter<T: Raster>(img: &T, sigma: f64) -> Result<T> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("filter sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let grid = img.grid();
    let mask = img.valid().mapv(|v| if v { 1.0 } else { 0.0 });
    let mut num = img.values() * &mask;
    let mut den = mask;
    for (axis, step) in [(Axis(0), grid.dx), (Axis(1), grid.dz)] {
        let k = gaussian_kernel(sigma / step);
        num = convolve_axis(&num, &k, axis);
        den = convolve_axis(&den, &k, axis);
    }
    let mut values = Array2::zeros(num.raw_dim());
    ndarray::Zip::from(&mut values)
        .and(&num)
        .and(&den)
        .and(img.valid())
        .for_each(|v, n, d, ok| {
            if *ok && *d > 0.0 {
                *v = n / d;
            }
        });
    Ok(img.with_data(values, img.valid().clone()))
}

/// Remove edge artifacts measured on an inclusion-free reference.
pub fn subtract_reference(img: &DpcImage, reference: &DpcImage) -> Result<DpcImage> {
    if img.grid != reference.grid {
        return Err(Error::Mismatch("reference grid differs".into()));
    }
    if (img.z_s - reference.z_s).abs() > 1e-12 {
        return Err(Error::Mismatch(format!("reference z_s {} != {}", reference.z_s, img.z_s)));
    }
    if img.m != reference.m {
        return Err(Error::Mismatch(format!("reference m {} != {}", reference.m, img.m)));
    }
    let values = &img.values - &reference.values;
    let mut valid = img.valid.clone();
    ndarray::Zip::from(&mut valid).and(&reference.valid).for_each(|a, b| *a &= *b);
    Ok(DpcImage { values, valid, provenance: Provenance::ReferenceCorrected, ..img.clone() })
}

/// Raise to an odd power `p` (sign preserved) then integrate along x.
pub fn enhance_integrate<T: Raster>(img: &T, p: u32) -> Result<ScalarImage> {
    if p == 0 || p % 2 == 0 {
        return Err(Error::invalid(format!("enhancement power must be odd and >= 1, got {p}")));
    }
    let grid = *img.grid();
    let mut values = img.values().mapv(|v| v.powi(p as i32));
    for mut row in values.lanes_mut(Axis(0)) {
        let mut acc = 0.0;
        for v in row.iter_mut() {
            acc += *v * grid.dx;
            *v = acc;
        }
    }
    Ok(ScalarImage { grid, values, valid: img.valid().clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    #[default]
    Signed,
    Absolute,
}

/// Integrate over depth: `sum_z v(x, z) dz` for each column.
pub fn project_depth<T: Raster>(img: &T, projection: Projection) -> Vec<f64> {
    let dz = img.grid().dz;
    img.values()
        .lanes(Axis(1))
        .into_iter()
        .map(|col| {
            col.iter()
                .map(|v| match projection {
                    Projection::Signed => *v,
                    Projection::Absolute => v.abs(),
                })
                .sum::<f64>()
                * dz
        })
        .collect()
}

/// Depth projections of the compounded DPC image for a scan of shear depths.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusMap {
    /// `rows[[i, ix]]` belongs to `zs_list[i]`.
    pub rows: Array2<f64>,
    pub zs_list: Vec<f64>,
    pub x0: f64,
    pub dx: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sharpness {
    /// Largest magnitude in the row.
    #[default]
    MaxAbs,
    /// Sum of squared lateral differences.
    GradientEnergy,
}

impl FocusMap {
    pub fn sharpness(&self, metric: Sharpness) -> Vec<f64> {
        self.rows
            .outer_iter()
            .map(|row| match metric {
                Sharpness::MaxAbs => row.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                Sharpness::GradientEnergy => {
                    row.windows(2).into_iter().map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / self.dx
                }
            })
            .collect()
    }

    /// Shear depth with the sharpest row.
    pub fn best_depth(&self, metric: Sharpness) -> f64 {
        let s = self.sharpness(metric);
        let i = (0..s.len())
            .max_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        self.zs_list[i]
    }

    /// Focus map with another one (an inclusion-free reference) subtracted.
    pub fn subtract(&self, reference: &FocusMap) -> Result<FocusMap> {
        if self.rows.dim() != reference.rows.dim() || self.zs_list != reference.zs_list {
            return Err(Error::Mismatch("focus map shapes differ".into()));
        }
        Ok(FocusMap { rows: &self.rows - &reference.rows, ..self.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FocusOptions {
    pub projection: Projection,
    /// Gaussian filter applied to each compounded image before projection (0 = none).
    pub filter_sigma: f64,
}

pub fn focus_map(stack: &BeamformedStack, m: usize, zs_list: &[f64]) -> Result<FocusMap> {
    focus_map_with(stack, m, zs_list, &FocusOptions::default())
}

pub fn focus_map_with(stack: &BeamformedStack, m: usize, zs_list: &[f64], opts: &FocusOptions) -> Result<FocusMap> {
    let g = stack.grid;
    if zs_list.is_empty() {
        return Err(Error::invalid("empty shear-depth list"));
    }
    if zs_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("shear depths must be strictly increasing"));
    }
    let z_hi = g.z0 + g.nz as f64 * g.dz;
    if let Some(z) = zs_list.iter().find(|z| !(**z >= g.z0 && **z <= z_hi)) {
        return Err(Error::invalid(format!("shear depth {z} outside [{}, {z_hi}]", g.z0)));
    }
    let rows: Vec<Vec<f64>> = zs_list
        .par_iter()
        .map(|&z_s| {
            let img = compound_dpc(stack, m, z_s)?;
            let img = gaussian_filter(&img, opts.filter_sigma)?;
            Ok(project_depth(&img, opts.projection))
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::zeros((zs_list.len(), g.nx));
    for (i, r) in rows.iter().enumerate() {
        for (ix, v) in r.iter().enumerate() {
            out[[i, ix]] = *v;
        }
    }
    Ok(FocusMap { rows: out, zs_list: zs_list.to_vec(), x0: g.x0, dx: g.dx, m })
}

/// x-y image assembled from depth projections taken at successive elevations.
#[derive(Debug, Clone, PartialEq)]
pub struct CModeImage {
    /// `values[[iy, ix]]`.
    pub values: Array2<f64>,
    pub ys: Vec<f64>,
    pub z_s: f64,
}

pub fn cmode_assemble(rows: &[(f64, Vec<f64>)], z_s: f64) -> Result<CModeImage> {
    let first = rows.first().ok_or_else(|| Error::invalid("no C-mode slices"))?;
    let nx = first.1.len();
    if nx == 0 {
        return Err(Error::invalid("empty C-mode row"));
    }
    for w in rows.windows(2) {
        if w[1].0 == w[0].0 {
            return Err(Error::invalid(format!("duplicate slice position y = {}", w[0].0)));
        }
        if w[1].0 < w[0].0 {
            return Err(Error::invalid("slice positions must be strictly increasing"));
        }
    }
    let mut values = Array2::zeros((rows.len(), nx));
    for (iy, (_, row)) in rows.iter().enumerate() {
        if row.len() != nx {
            return Err(Error::Mismatch(format!("row {iy} has {} samples, expected {nx}", row.len())));
        }
        for (ix, v) in row.iter().enumerate() {
            values[[iy, ix]] = *v;
        }
    }
    Ok(CModeImage { values, ys: rows.iter().map(|r| r.0).collect(), z_s })
}

/// `sum (x - center) * row(x) dx`: positive when the right side dominates.
pub fn lateral_moment(row: &[f64], x0: f64, dx: f64, center: f64) -> f64 {
    row.iter()
        .enumerate()
        .map(|(i, v)| (x0 + i as f64 * dx - center) * v * dx)
        .sum()
}

/// Parameter set for one interactive DPC frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpcRecipe {
    pub z_s: f64,
    pub m: usize,
    #[serde(default)]
    pub filter_sigma: f64,
    /// 0 disables enhancement, otherwise an odd power.
    #[serde(default)]
    pub enhance_p: u32,
}

impl DpcRecipe {
    /// `z_s` may sit anywhere from the array face down to the deepest row;
    /// a screen at the surface is sheared about `z = 0` even when the pixel
    /// grid starts deeper.
    pub fn validate(&self, stack: &BeamformedStack) -> Result<()> {
        let g = stack.grid;
        if !(self.z_s >= 0.0 && self.z_s <= g.z_last()) {
            return Err(Error::invalid(format!("z_s = {} outside depth range [0, {}]", self.z_s, g.z_last())));
        }
        let n = stack.n_angles();
        if self.m < 1 || self.m + 1 > n {
            return Err(Error::invalid(format!("m = {} outside 1..={}", self.m, n.saturating_sub(1))));
        }
        if !(self.filter_sigma >= 0.0 && self.filter_sigma.is_finite()) {
            return Err(Error::invalid("filter sigma must be >= 0"));
        }
        if self.enhance_p != 0 && self.enhance_p % 2 == 0 {
            return Err(Error::invalid("enhancement power must be 0 or odd"));
        }
        Ok(())
    }

    /// Compound, filter, optionally subtract the same processing applied to a
    /// reference stack, optionally enhance + integrate.
    pub fn run(&self, stack: &BeamformedStack, reference: Option<&BeamformedStack>) -> Result<ScalarImage> {
        self.validate(stack)?;
        let process = |s: &BeamformedStack| -> Result<DpcImage> {
            let img = compound_dpc(s, self.m, self.z_s)?;
            gaussian_filter(&img, self.filter_sigma)
        };
        let mut img = process(stack)?;
        if let Some(r) = reference {
            if r.grid != stack.grid || r.n_angles() != stack.n_angles() {
                return Err(Error::Mismatch("reference stack geometry differs".into()));
            }
            img = subtract_reference(&img, &process(r)?)?;
        }
        if self.enhance_p > 0 {
            enhance_integrate(&img, self.enhance_p)
        } else {
            Ok(img.to_scalar())
        }
    }
}
