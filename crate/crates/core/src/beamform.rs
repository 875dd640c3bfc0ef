//! Delay-and-sum reconstruction of per-tilt complex images.
//!
//! Each receive trace is turned into its analytic signal, demodulated to
//! baseband, and sampled at the transmit + receive travel time of every pixel
//! by linear interpolation; the carrier is restored afterwards so the image
//! keeps the absolute RF phase that the differential-phase stage relies on.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::domain::{ImageGrid, Scene};
use crate::error::{Error, Result};
pub use crate::image::ScalarImage;
use crate::synth::RfDataset;

/// Default receive f-number.
pub const F_NUMBER: f64 = 1.5;
/// Dynamic range of the B-mode display, dB.
pub const BMODE_FLOOR_DB: f64 = -60.0;

/// Reusable forward/inverse FFT pair for analytic signals of one length.
pub struct AnalyticTransform {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AnalyticTransform {
    pub fn new(len: usize) -> Result<Self> {
        if len < 16 {
            return Err(Error::invalid(format!("analytic signal needs >= 16 samples, got {len}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) })
    }

    pub fn apply(&self, trace: &[f64]) -> Result<Vec<Complex64>> {
        if trace.len() != self.len {
            return Err(Error::Mismatch(format!("trace length {} != {}", trace.len(), self.len)));
        }
        if trace.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trace".into()));
        }
        let n = self.len;
        let mut buf: Vec<Complex64> = trace.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        // one-sided spectrum: keep DC (and Nyquist for even n), double positives
        let half = n / 2;
        let last_doubled = if n % 2 == 0 { half - 1 } else { half };
        for v in &mut buf[1..=last_doubled] {
            *v *= 2.0;
        }
        for v in &mut buf[last_doubled + 1 + usize::from(n % 2 == 0)..] {
            *v = Complex64::new(0.0, 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        for v in &mut buf {
            *v *= scale;
        }
        Ok(buf)
    }
}

/// Complex analytic signal of a real trace.
pub fn analytic_signal(trace: &[f64]) -> Result<Vec<Complex64>> {
    AnalyticTransform::new(trace.len())?.apply(trace)
}

/// Per-tilt complex images `images[[n, ix, iz]]` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedStack {
    pub images: Array3<Complex64>,
    pub grid: ImageGrid,
    pub scene: Scene,
}

impl BeamformedStack {
    pub fn n_angles(&self) -> usize {
        self.images.shape()[0]
    }

    /// Coherent sum over all tilts.
    pub fn compounded(&self) -> Array2<Complex64> {
        self.images.sum_axis(ndarray::Axis(0))
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.images.shape();
        if s[0] != self.scene.sequence.len() || s[1] != self.grid.nx || s[2] != self.grid.nz {
            return Err(Error::Mismatch(format!(
                "stack shape {:?} does not match {} angles on a {}x{} grid",
                s,
                self.scene.sequence.len(),
                self.grid.nx,
                self.grid.nz
            )));
        }
        if self.images.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("beamformed stack".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformOptions {
    /// Receive aperture half-width is `z / (2 f_number)`.
    pub f_number: f64,
}

impl Default for BeamformOptions {
    fn default() -> Self {
        Self { f_number: F_NUMBER }
    }
}

pub fn das_beamform(rf: &RfDataset, grid: &ImageGrid) -> Result<BeamformedStack> {
    das_beamform_with(rf, grid, &BeamformOptions::default())
}

pub fn das_beamform_with(rf: &RfDataset, grid: &ImageGrid, opts: &BeamformOptions) -> Result<BeamformedStack> {
    rf.validate()?;
    grid.validate()?;
    if !(opts.f_number > 0.0) {
        return Err(Error::invalid("f-number must be positive"));
    }
    let scene = &rf.scene;
    let tr = &scene.transducer;
    let c = scene.medium.c;
    let fs = tr.fs;
    let w0 = 2.0 * PI * tr.f0;
    let (n_angles, n_el, n_samples) = (rf.n_angles(), rf.n_elements(), rf.n_samples());

    // baseband analytic traces
    let transform = AnalyticTransform::new(n_samples)?;
    let carrier: Vec<Complex64> = (0..n_samples)
        .map(|k| Complex64::from_polar(1.0, -w0 * rf.time(k)))
        .collect();
    let traces: Vec<Vec<f64>> = rf
        .samples
        .outer_iter()
        .flat_map(|a| a.outer_iter().map(|t| t.to_vec()).collect::<Vec<_>>())
        .collect();
    let iq: Vec<Vec<Complex64>> = traces
        .par_iter()
        .map(|t| {
            let mut a = transform.apply(t)?;
            for (v, r) in a.iter_mut().zip(&carrier) {
                *v *= r;
            }
            Ok(a)
        })
        .collect::<Result<_>>()?;

    let (sin_t, cos_t): (Vec<f64>, Vec<f64>) = scene.sequence.angles.iter().map(|a| (a.sin(), a.cos())).unzip();
    let t0 = rf.t0;
    let last = (n_samples - 1) as f64;

    let columns: Vec<Vec<Complex64>> = (0..grid.nx)
        .into_par_iter()
        .map(|ix| {
            let x = grid.x(ix);
            let mut col = vec![Complex64::new(0.0, 0.0); n_angles * grid.nz];
            let mut acc = vec![Complex64::new(0.0, 0.0); n_angles];
            let mut tau_e = vec![0.0; n_angles];
            for iz in 0..grid.nz {
                let z = grid.z(iz);
                for n in 0..n_angles {
                    tau_e[n] = (x * sin_t[n] + z * cos_t[n]) / c;
                    acc[n] = Complex64::new(0.0, 0.0);
                }
                let (e_lo, e_hi) = aperture(tr.element_x0, tr.pitch, n_el, x, z / (2.0 * opts.f_number));
                for e in e_lo..=e_hi {
                    let dxe = x - tr.element_x(e);
                    let tau_r = (dxe * dxe + z * z).sqrt() / c;
                    let rot = Complex64::from_polar(1.0, w0 * tau_r);
                    for n in 0..n_angles {
                        let t = tau_e[n] + tau_r;
                        let p = (t - t0) * fs;
                        if !(p >= 0.0 && p <= last) {
                            return Err(Error::OutsideWindow { time: t, start: t0, end: rf.t_end() });
                        }
                        let k = (p.floor() as usize).min(n_samples - 2);
                        let f = p - k as f64;
                        let trace = &iq[n * n_el + e];
                        acc[n] += (trace[k] * (1.0 - f) + trace[k + 1] * f) * rot;
                    }
                }
                for n in 0..n_angles {
                    col[n * grid.nz + iz] = acc[n] * Complex64::from_polar(1.0, w0 * tau_e[n]);
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let mut images = Array3::zeros((n_angles, grid.nx, grid.nz));
    for (ix, col) in columns.iter().enumerate() {
        for n in 0..n_angles {
            for iz in 0..grid.nz {
                images[[n, ix, iz]] = col[n * grid.nz + iz];
            }
        }
    }
    let mut scene = scene.clone();
    scene.grid = *grid;
    Ok(BeamformedStack { images, grid: *grid, scene })
}

/// Elements within `half_width` of `x`; at least the nearest one.
fn aperture(x0: f64, pitch: f64, n: usize, x: f64, half_width: f64) -> (usize, usize) {
    let lo = ((x - half_width - x0) / pitch).ceil().max(0.0);
    let hi = ((x + half_width - x0) / pitch).floor().min((n - 1) as f64);
    if lo <= hi {
        (lo as usize, hi as usize)
    } else {
        let nearest = ((x - x0) / pitch).round().clamp(0.0, (n - 1) as f64) as usize;
        (nearest, nearest)
    }
}

/// Log-compressed envelope of the coherent compound, normalized to 0 dB and
/// clipped at -60 dB.
pub fn compound_bmode(stack: &BeamformedStack) -> Result<ScalarImage> {
    let env = stack.compounded().mapv(|v| v.norm());
    let peak = env.iter().cloned().fold(0.0f64, f64::max);
    if !(peak > 0.0) {
        return Err(Error::EmptyImage);
    }
    let values = env.mapv(|v| {
        if v > 0.0 {
            (20.0 * (v / peak).log10()).clamp(BMODE_FLOOR_DB, 0.0)
        } else {
            BMODE_FLOOR_DB
        }
    });
    ScalarImage::new(stack.grid, values)
}
