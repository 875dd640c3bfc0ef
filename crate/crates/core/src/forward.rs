//! Paraxial wave-acoustic forward model of the DPC signal downstream of a thin
//! aberrator, plus image comparison.
//!
//! For a pixel at lateral position `x` and height `z` below the screen,
//!
//! ```text
//! dPhi(x, z) = arg  integral W(x - x_c, x_c) exp(-pi^2 td^2 ks^2 u^2 - i 2 pi td k0 u) dx_c,   u = x - x_c
//! W(u, x_c)  = exp(-(pi / phi)^2 (u / z - c tau_a'(x_c))^2) / phi
//! ```
//!
//! `W` concentrates the integral on rays leaving the screen at `x_c` with
//! direction `c tau_a'(x_c)`; as `phi -> 0` it becomes a ray selector.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{interp_samples, AberratorProfile, ImageGrid, Scene, MAX_TILT};
use crate::dpc::{wrap_phase, DpcImage, Provenance, Raster};
use crate::error::{Error, Result};
use crate::image::Roi;
use crate::stats;

/// Coherence parameter used by `ray_limit_dpc`.
pub const RAY_LIMIT_PHI: f64 = 1e-3;
/// Largest change allowed when the quadrature density is doubled.
pub const CONVERGENCE_TOL: f64 = 1e-3;
/// Rays steeper than this are outside the paraxial model and are not followed.
const MAX_RAY_SLOPE: f64 = 1.0;
/// Gaussian tails are cut where the exponent drops below `-TAIL`.
const TAIL: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardParams {
    /// Mean wavenumber `f0 / c`, 1/m.
    pub kappa0: f64,
    /// Wavenumber spread `nu_sigma / c`, 1/m.
    pub kappa_sigma: f64,
    pub theta_d: f64,
    pub phi_kappa: f64,
    pub c: f64,
}

impl ForwardParams {
    /// Parameters matching a scene's probe and tilt sequence.
    pub fn for_scene(scene: &Scene, m: usize, phi_kappa: f64) -> Self {
        let c = scene.medium.c;
        Self {
            kappa0: scene.transducer.f0 / c,
            kappa_sigma: scene.transducer.bandwidth_sigma / c,
            theta_d: scene.sequence.mean_theta_d(m),
            phi_kappa,
            c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("kappa0", self.kappa0),
            ("kappa_sigma", self.kappa_sigma),
            ("theta_d", self.theta_d),
            ("phi_kappa", self.phi_kappa),
            ("c", self.c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.phi_kappa >= 1.0 {
            return Err(Error::invalid(format!("phi_kappa must be < 1, got {}", self.phi_kappa)));
        }
        if self.theta_d > MAX_TILT {
            return Err(Error::invalid(format!("theta_d {} exceeds {MAX_TILT} rad", self.theta_d)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    /// Multiplies the base quadrature step.
    pub step_factor: f64,
    /// Refine until doubling the density changes no pixel by more than
    /// `CONVERGENCE_TOL`; off evaluates once at the base step.
    pub check_convergence: bool,
    pub max_refinements: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { step_factor: 1.0, check_convergence: true, max_refinements: 3 }
    }
}

struct Integrand<'a> {
    slopes: &'a [f64],
    /// `c |d slope / dx|` of the interpolated slope on each sample interval.
    bend: &'a [f64],
    x0: f64,
    dx: f64,
    p: ForwardParams,
    psi_max: f64,
}

impl Integrand<'_> {
    fn slope_at(&self, x: f64) -> f64 {
        interp_samples(self.slopes, self.x0, self.dx, x)
    }

    fn base_step(&self, z: f64) -> f64 {
        (1.0 / (8.0 * self.p.kappa0)).min(z * self.p.phi_kappa / (PI * 2f64.sqrt()))
    }

    fn half_width(&self, z: f64) -> f64 {
        let w = z * (self.psi_max + TAIL.sqrt() * self.p.phi_kappa / PI);
        let g = TAIL.sqrt() / (PI * self.p.theta_d * self.p.kappa_sigma);
        w.min(g)
    }

    /// Largest `bend` over screen positions in `[a, b]`.
    fn bend_between(&self, a: f64, b: f64) -> f64 {
        let n = self.bend.len();
        if n == 0 {
            return 0.0;
        }
        let i0 = ((a - self.x0) / self.dx).floor().max(0.0) as usize;
        let i1 = (((b - self.x0) / self.dx).ceil().max(0.0) as usize).min(n);
        self.bend.get(i0.min(n)..i1).map_or(0.0, |s| s.iter().fold(0.0, |m, v| m.max(*v)))
    }

    /// Phase at one pixel. Nodes sit symmetrically about `x`, so an even
    /// weight gives an exactly real sum. An interval `[kh, (k+1)h]` and its
    /// mirror are split further wherever the ray direction turns quickly
    /// (near the rim of a sphere, say), so `W` stays resolved.
    fn phase(&self, x: f64, z: f64, h: f64) -> f64 {
        let p = &self.p;
        let a = (PI * p.theta_d * p.kappa_sigma).powi(2);
        let b = 2.0 * PI * p.theta_d * p.kappa0;
        let k2 = (PI / p.phi_kappa).powi(2);
        let w = |u: f64| {
            let d = u / z - p.c * self.slope_at(x - u);
            (-k2 * d * d).exp()
        };
        // contribution of the node pair at +-u, with weight `wt`
        let pair = |u: f64, wt: f64, re: &mut f64, im: &mut f64| {
            let g = wt * (-a * u * u).exp();
            let (wp, wm) = (w(u), w(-u));
            let (s, c) = (b * u).sin_cos();
            *re += g * (wp + wm) * c;
            *im += g * (wm - wp) * s;
        };
        let resolve = p.phi_kappa / (PI * 2f64.sqrt());
        let (mut re, mut im) = (0.0, 0.0);
        let n = (self.half_width(z) / h).ceil() as usize;
        for k in 0..n {
            let (u0, u1) = (k as f64 * h, (k + 1) as f64 * h);
            let bend = self.bend_between(x - u1, x - u0).max(self.bend_between(x + u0, x + u1));
            let parts = ((h * (1.0 / z + bend) / resolve - 1e-9).ceil() as usize).max(1);
            let sub = 1.0 / parts as f64;
            // trapezoid on the interval and its mirror; at u = 0 the pair
            // collapses onto the single center node
            pair(u0, 0.5 * sub, &mut re, &mut im);
            for j in 1..parts {
                pair(u0 + j as f64 * h * sub, sub, &mut re, &mut im);
            }
            pair(u1, 0.5 * sub, &mut re, &mut im);
        }
        if re == 0.0 && im == 0.0 {
            return 0.0;
        }
        let ph = im.atan2(re);
        if ph <= -PI {
            PI
        } else {
            ph
        }
    }
}

fn eval_once(f: &Integrand, grid: &ImageGrid, depth: f64, factor: f64) -> Array2<f64> {
    let cols: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|ix| {
            let x = grid.x(ix);
            (0..grid.nz)
                .map(|iz| {
                    let z = grid.z(iz) - depth;
                    f.phase(x, z, f.base_step(z) * factor)
                })
                .collect()
        })
        .collect();
    Array2::from_shape_fn((grid.nx, grid.nz), |(ix, iz)| cols[ix][iz])
}

pub fn eval_forward_dpc(aberrator: &AberratorProfile, params: &ForwardParams, grid: &ImageGrid) -> Result<DpcImage> {
    eval_forward_dpc_with(aberrator, params, grid, &ForwardOptions::default())
}

pub fn eval_forward_dpc_with(
    aberrator: &AberratorProfile,
    params: &ForwardParams,
    grid: &ImageGrid,
    opts: &ForwardOptions,
) -> Result<DpcImage> {
    params.validate()?;
    aberrator.validate()?;
    grid.validate()?;
    if !(opts.step_factor > 0.0 && opts.step_factor.is_finite()) {
        return Err(Error::invalid("quadrature step factor must be positive"));
    }
    if grid.z0 <= aberrator.depth {
        return Err(Error::invalid(format!(
            "grid starts at z = {} m, at or above the aberrator depth {} m",
            grid.z0, aberrator.depth
        )));
    }
    let slopes = aberrator.slope_samples();
    let psi_max = slopes.iter().fold(0.0f64, |a, s| a.max((params.c * s).abs())).min(MAX_RAY_SLOPE);
    let bend: Vec<f64> = slopes.windows(2).map(|s| params.c * (s[1] - s[0]).abs() / aberrator.dx).collect();
    let f = Integrand { slopes: &slopes, bend: &bend, x0: aberrator.x0, dx: aberrator.dx, p: *params, psi_max };

    let mut factor = opts.step_factor;
    let mut values = eval_once(&f, grid, aberrator.depth, factor);
    if opts.check_convergence {
        let mut worst = (0.0, 0usize, 0usize);
        let mut converged = false;
        for _ in 0..=opts.max_refinements {
            factor /= 2.0;
            let finer = eval_once(&f, grid, aberrator.depth, factor);
            worst = (0.0, 0, 0);
            for ((ix, iz), v) in finer.indexed_iter() {
                let d = wrap_phase(v - values[[ix, iz]]).abs();
                if d > worst.0 {
                    worst = (d, ix, iz);
                }
            }
            values = finer;
            if worst.0 <= CONVERGENCE_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergent { x: grid.x(worst.1), z: grid.z(worst.2), change: worst.0 });
        }
    }
    DpcImage::new(*grid, values, aberrator.depth, 1, Provenance::ForwardModel)
}

/// The forward model with `phi_kappa` at `RAY_LIMIT_PHI`, where each pixel
/// only sees the rays passing through it.
pub fn ray_limit_dpc(aberrator: &AberratorProfile, params: &ForwardParams, grid: &ImageGrid) -> Result<DpcImage> {
    let p = ForwardParams { phi_kappa: RAY_LIMIT_PHI, ..*params };
    eval_forward_dpc(aberrator, &p, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pearson_r: f64,
    pub sign_agreement: f64,
    pub roi: Roi,
    pub pixels: usize,
}

/// Pearson correlation and sign agreement over the ROI pixels valid in both.
pub fn compare_images<A: Raster, B: Raster>(a: &A, b: &B, roi: &Roi) -> Result<ComparisonReport> {
    if a.grid() != b.grid() {
        return Err(Error::Mismatch("images are on different grids".into()));
    }
    let mut mask = a.valid().clone();
    ndarray::Zip::from(&mut mask).and(b.valid()).for_each(|m, v| *m &= *v);
    let va = stats::roi_values(a.values(), &mask, a.grid(), roi);
    let vb = stats::roi_values(b.values(), &mask, a.grid(), roi);
    if va.is_empty() {
        return Err(Error::invalid("region of interest contains no valid pixels"));
    }
    Ok(ComparisonReport {
        pearson_r: stats::pearson(&va, &vb)?,
        sign_agreement: stats::sign_agreement(&va, &vb),
        roi: *roi,
        pixels: va.len(),
    })
}
