//! Pulse-echo data synthesis: random point scatterers insonified by tilted
//! plane waves that cross a thin delay screen on transmit only.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AberratorProfile, ImageGrid, MediumConfig, Scene};
use crate::error::{Error, Result};

/// Sample spacing of generated delay profiles (well below lambda0/4 for any
/// probe under ~38 MHz in tissue).
pub const PROFILE_SPACING: f64 = 10e-6;

/// Upper bound on the expected scatterer count of a generated field.
pub const MAX_SCATTERERS: f64 = 1e7;

/// Axis-aligned rectangle in the x-z plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Self {
        Self { x_min, x_max, z_min, z_max }
    }

    pub fn of_grid(grid: &ImageGrid) -> Self {
        Self::new(grid.x0, grid.x_last(), grid.z0, grid.z_last())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.z_max - self.z_min)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }

    pub fn union(&self, other: &Region) -> Region {
        Region::new(
            self.x_min.min(other.x_min),
            self.x_max.max(other.x_max),
            self.z_min.min(other.z_min),
            self.z_max.max(other.z_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererField {
    pub positions: Vec<(f64, f64)>,
    pub reflectivities: Vec<f64>,
    pub seed: u64,
    pub region: Region,
}

impl ScattererField {
    pub fn empty(region: Region) -> Self {
        Self { positions: Vec::new(), reflectivities: Vec::new(), seed: 0, region }
    }

    pub fn single(x: f64, z: f64, amplitude: f64) -> Self {
        Self {
            positions: vec![(x, z)],
            reflectivities: vec![amplitude],
            seed: 0,
            region: Region::new(x, x, z, z),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Concatenation of two fields.
    pub fn union(&self, other: &ScattererField) -> ScattererField {
        let mut positions = self.positions.clone();
        positions.extend_from_slice(&other.positions);
        let mut reflectivities = self.reflectivities.clone();
        reflectivities.extend_from_slice(&other.reflectivities);
        ScattererField { positions, reflectivities, seed: self.seed, region: self.region.union(&other.region) }
    }
}

/// Uniform i.i.d. scatterers with a Poisson-distributed count of mean
/// `density * area` and standard-normal reflectivities.
pub fn gen_scatterers(region: Region, density: f64, seed: u64) -> Result<ScattererField> {
    if !(region.x_max > region.x_min && region.z_max > region.z_min) {
        return Err(Error::invalid("scatterer region is degenerate"));
    }
    if !(density >= 0.0 && density.is_finite()) {
        return Err(Error::invalid(format!("density must be >= 0, got {density}")));
    }
    let expected = density * region.area();
    if expected > MAX_SCATTERERS {
        return Err(Error::ResourceLimit(format!(
            "expected {expected:.3e} scatterers exceeds {MAX_SCATTERERS:.0e}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = if expected > 0.0 {
        Poisson::new(expected)
            .map_err(|e| Error::invalid(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut positions = Vec::with_capacity(count);
    let mut reflectivities = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(region.x_min..region.x_max);
        let z = rng.random_range(region.z_min..region.z_max);
        positions.push((x, z));
        reflectivities.push(StandardNormal.sample(&mut rng));
    }
    Ok(ScattererField { positions, reflectivities, seed, region })
}

/// Scatterers per resolution cell used when a scene file gives no density
/// (fully developed speckle).
pub const SCATTERERS_PER_CELL: f64 = 20.0;

/// Lateral `lambda0 * F` by axial half the pulse-envelope FWHM in length.
pub fn resolution_cell_area(scene: &Scene) -> f64 {
    let lateral = scene.wavelength() * crate::beamform::F_NUMBER;
    let fwhm_t = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * scene.transducer.pulse_sigma_t();
    lateral * scene.medium.c * fwhm_t / 2.0
}

pub fn default_density(scene: &Scene) -> f64 {
    SCATTERERS_PER_CELL / resolution_cell_area(scene)
}

fn symmetric_profile(
    center_x: f64,
    half_extent: f64,
    depth: f64,
    label: String,
    f: impl Fn(f64) -> f64,
) -> Result<AberratorProfile> {
    let half = (half_extent / PROFILE_SPACING).ceil() as usize + 2;
    let x0 = center_x - half as f64 * PROFILE_SPACING;
    let delays = (0..2 * half + 1)
        .map(|i| f((i as f64 - half as f64) * PROFILE_SPACING))
        .collect();
    AberratorProfile::new(depth, x0, PROFILE_SPACING, delays, label)
}

/// Projected chord of a sphere: `max_delay * sqrt(1 - (dx / radius)^2)`.
pub fn sphere_delay_profile(center_x: f64, radius: f64, max_delay: f64, depth: f64) -> Result<AberratorProfile> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    symmetric_profile(center_x, radius, depth, format!("sphere r={radius:.3e} tau={max_delay:.3e}"), |u| {
        let q = u / radius;
        if q.abs() < 1.0 {
            max_delay * (1.0 - q * q).max(0.0).sqrt()
        } else {
            0.0
        }
    })
}

/// `max_delay * exp(-(dx / waist)^2)`, cut to zero beyond four waists.
pub fn gauss_delay_profile(center_x: f64, waist: f64, max_delay: f64, depth: f64) -> Result<AberratorProfile> {
    if !(waist > 0.0 && waist.is_finite()) {
        return Err(Error::invalid("gaussian waist must be positive"));
    }
    symmetric_profile(center_x, 4.0 * waist, depth, format!("gauss w={waist:.3e} tau={max_delay:.3e}"), |u| {
        if u.abs() <= 4.0 * waist {
            max_delay * (-(u / waist).powi(2)).exp()
        } else {
            0.0
        }
    })
}

/// Thin-screen equivalent of a circular inclusion with relative sound-speed
/// contrast `dc_over_c`: the extra travel time along each vertical chord,
/// placed at the inclusion's center depth. A slower inclusion delays.
pub fn inclusion_delay_from_sos(
    center: (f64, f64),
    radius: f64,
    dc_over_c: f64,
    medium: &MediumConfig,
) -> Result<AberratorProfile> {
    if !(dc_over_c.abs() < 0.1) {
        return Err(Error::invalid(format!("|dc/c| = {dc_over_c} must be < 0.1")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("inclusion radius must be positive"));
    }
    medium.validate()?;
    let c = medium.c;
    symmetric_profile(center.0, radius, center.1, format!("inclusion r={radius:.3e} dc/c={dc_over_c}"), |u| {
        let h = radius * radius - u * u;
        if h >= 0.0 {
            -(dc_over_c / c) * 2.0 * h.sqrt()
        } else {
            0.0
        }
    })
}

/// Parametric screen description, as found in scene files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AberratorSpec {
    Sphere { center_x: f64, radius: f64, max_delay: f64, depth: f64 },
    Gauss { center_x: f64, waist: f64, max_delay: f64, depth: f64 },
    Inclusion { center_x: f64, center_z: f64, radius: f64, dc_over_c: f64 },
}

impl AberratorSpec {
    pub fn build(&self, medium: &MediumConfig) -> Result<AberratorProfile> {
        match *self {
            AberratorSpec::Sphere { center_x, radius, max_delay, depth } => {
                sphere_delay_profile(center_x, radius, max_delay, depth)
            }
            AberratorSpec::Gauss { center_x, waist, max_delay, depth } => {
                gauss_delay_profile(center_x, waist, max_delay, depth)
            }
            AberratorSpec::Inclusion { center_x, center_z, radius, dc_over_c } => {
                inclusion_delay_from_sos((center_x, center_z), radius, dc_over_c, medium)
            }
        }
    }
}

/// Per-angle, per-element receive traces. `samples[[angle, element, k]]` is
/// the sample at time `t0 + k / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfDataset {
    pub samples: Array3<f64>,
    pub t0: f64,
    pub scene: Scene,
}

impl RfDataset {
    pub fn n_angles(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn n_elements(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.samples.shape()[2]
    }

    pub fn fs(&self) -> f64 {
        self.scene.transducer.fs
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_samples() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.samples.shape();
        if s[0] != self.scene.sequence.len() || s[1] != self.scene.transducer.n_elements {
            return Err(Error::Mismatch(format!(
                "rf shape {:?} does not match scene ({} angles, {} elements)",
                s,
                self.scene.sequence.len(),
                self.scene.transducer.n_elements
            )));
        }
        if s[2] < 2 {
            return Err(Error::Mismatch("rf traces need >= 2 samples".into()));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rf samples".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Standard deviation of additive white Gaussian noise (0 disables it).
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

/// Envelope half-width in units of the temporal sigma.
const PULSE_HALF_WIDTH_SIGMAS: f64 = 6.0;
/// Table points per sampling interval.
const PULSE_OVERSAMPLE: usize = 64;

/// Gaussian pulse `exp(-2 pi^2 nu_s^2 t^2) cos(2 pi nu_0 t)` tabulated on a
/// grid that is an exact refinement of the sampling clock.
struct PulseTable {
    half_width: f64,
    inv_step: f64,
    values: Vec<f64>,
}

impl PulseTable {
    fn new(f0: f64, bandwidth_sigma: f64, fs: f64) -> Self {
        let sigma_t = 1.0 / (2.0 * std::f64::consts::PI * bandwidth_sigma);
        let step = 1.0 / (fs * PULSE_OVERSAMPLE as f64);
        let half_points = (PULSE_HALF_WIDTH_SIGMAS * sigma_t / step).ceil() as usize;
        let half_width = half_points as f64 * step;
        let a = 2.0 * (std::f64::consts::PI * bandwidth_sigma).powi(2);
        let w = 2.0 * std::f64::consts::PI * f0;
        let values = (0..=2 * half_points + 1)
            .map(|i| {
                let t = i as f64 * step - half_width;
                (-a * t * t).exp() * (w * t).cos()
            })
            .collect();
        Self { half_width, inv_step: 1.0 / step, values }
    }
}

/// Recording window `[t0, t_end]` that holds every echo from `region`.
fn trace_window(scene: &Scene, region: &Region, max_screen_delay: f64, pulse_half: f64) -> (f64, usize) {
    let c = scene.medium.c;
    let fs = scene.transducer.fs;
    let corners = [
        (region.x_min, region.z_min),
        (region.x_min, region.z_max),
        (region.x_max, region.z_min),
        (region.x_max, region.z_max),
    ];
    let mut tx_lo = f64::INFINITY;
    let mut tx_hi = f64::NEG_INFINITY;
    for &theta in &scene.sequence.angles {
        for &(x, z) in &corners {
            let t = (x * theta.sin() + z * theta.cos()) / c;
            tx_lo = tx_lo.min(t);
            tx_hi = tx_hi.max(t);
        }
    }
    let tr = &scene.transducer;
    let ends = [tr.element_x(0), tr.element_x(tr.n_elements - 1)];
    let mut rx_hi = 0.0f64;
    for &(x, z) in &corners {
        for &xe in &ends {
            rx_hi = rx_hi.max(((x - xe).powi(2) + z * z).sqrt() / c);
        }
    }
    let rx_lo = region.z_min.max(0.0) / c;
    let margin = pulse_half + 4.0 / fs;
    let t0 = ((tx_lo + rx_lo - max_screen_delay - margin) * fs).floor() / fs;
    let t_end = tx_hi + rx_hi + max_screen_delay + margin;
    let n = ((t_end - t0) * fs).ceil() as usize + 1;
    (t0, n)
}

pub fn synthesize_rf(
    scatterers: &ScattererField,
    aberrator: Option<&AberratorProfile>,
    scene: &Scene,
) -> Result<RfDataset> {
    synthesize_rf_with(scatterers, aberrator, scene, &SynthOptions::default())
}

/// Echo of scatterer `i` on element `e` for tilt `n`:
/// `a_i / sqrt(r) * g(t - t_tx - t_rx)` with `t_tx = s_n . r_i / c + tau_a(x_int)`,
/// where `x_int` is where the tilted transmit ray through `r_i` crosses the
/// screen plane. Scatterers above the screen are not delayed.
pub fn synthesize_rf_with(
    scatterers: &ScattererField,
    aberrator: Option<&AberratorProfile>,
    scene: &Scene,
    opts: &SynthOptions,
) -> Result<RfDataset> {
    if scatterers.positions.len() != scatterers.reflectivities.len() {
        return Err(Error::Mismatch("scatterer positions/reflectivities length".into()));
    }
    if let Some((x, z)) = scatterers
        .positions
        .iter()
        .find(|(x, z)| !x.is_finite() || !z.is_finite() || *z <= 0.0)
    {
        return Err(Error::invalid(format!("scatterer at ({x}, {z}) must lie below the array")));
    }
    let tr = &scene.transducer;
    let c = scene.medium.c;
    let fs = tr.fs;
    let pulse = PulseTable::new(tr.f0, tr.bandwidth_sigma, fs);
    let max_screen = aberrator.map_or(0.0, |a| a.max_abs_delay());
    let region = if scatterers.is_empty() {
        Region::of_grid(&scene.grid)
    } else {
        Region::of_grid(&scene.grid).union(&scatterers.region)
    };
    let (t0, n_samples) = trace_window(scene, &region, max_screen, pulse.half_width);
    let t_end = t0 + (n_samples - 1) as f64 / fs;

    // Transmit arrival time of every scatterer for every tilt.
    let n_angles = scene.sequence.len();
    let tx: Vec<Vec<f64>> = scene
        .sequence
        .angles
        .iter()
        .map(|&theta| {
            let (s, co, tan) = (theta.sin(), theta.cos(), theta.tan());
            scatterers
                .positions
                .iter()
                .map(|&(x, z)| {
                    let screen = match aberrator {
                        Some(a) if z > a.depth => a.delay_at(x - (z - a.depth) * tan),
                        _ => 0.0,
                    };
                    (x * s + z * co) / c + screen
                })
                .collect()
        })
        .collect();

    let n_el = tr.n_elements;
    let mut samples = Array3::<f64>::zeros((n_angles, n_el, n_samples));
    let slice = samples.as_slice_mut().expect("standard layout");
    let oversample = PULSE_OVERSAMPLE;
    let table = &pulse.values;

    let status: Result<()> = slice
        .par_chunks_mut(n_samples)
        .enumerate()
        .try_for_each(|(trace_idx, trace)| {
            let n = trace_idx / n_el;
            let xe = tr.element_x(trace_idx % n_el);
            for (i, (&(x, z), &a)) in scatterers.positions.iter().zip(&scatterers.reflectivities).enumerate() {
                let range = ((x - xe).powi(2) + z * z).sqrt();
                let t_arr = tx[n][i] + range / c;
                let start = t_arr - pulse.half_width;
                let stop = t_arr + pulse.half_width;
                if start < t0 || stop > t_end {
                    return Err(Error::OutsideWindow { time: t_arr, start: t0, end: t_end });
                }
                let amp = a / range.sqrt();
                let k0 = ((start - t0) * fs).ceil() as usize;
                // table position of sample k0; later samples advance by exactly `oversample`
                let p = ((t0 + k0 as f64 / fs) - start) * pulse.inv_step;
                let mut j = p.floor() as usize;
                let f = p - j as f64;
                let mut k = k0;
                while j + 1 < table.len() && k < n_samples {
                    trace[k] += amp * (table[j] * (1.0 - f) + table[j + 1] * f);
                    j += oversample;
                    k += 1;
                }
            }
            Ok(())
        });
    status?;

    if opts.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, opts.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed);
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let mut scene = scene.clone();
    scene.aberrator = aberrator.cloned();
    Ok(RfDataset { samples, t0, scene })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn scene() -> Scene {
        presets::desk_scene(presets::desk_grid(5e-3, 30e-3)).unwrap()
    }

    fn peak_index(trace: ndarray::ArrayView1<f64>) -> usize {
        trace
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn zero_density_gives_empty_field() {
        let f = gen_scatterers(Region::new(0.0, 1e-2, 1e-3, 2e-2), 0.0, 3).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn scatterers_are_reproducible_and_inside() {
        let r = Region::new(-5e-3, 5e-3, 2e-3, 12e-3);
        let a = gen_scatterers(r, 2e7, 11).unwrap();
        let b = gen_scatterers(r, 2e7, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.positions.iter().all(|&(x, z)| r.contains(x, z)));
        let c = gen_scatterers(r, 2e7, 12).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn poisson_count_within_four_sigma() {
        let r = Region::new(0.0, 40e-3, 0.0, 50e-3);
        let f = gen_scatterers(r, 5e6, 7).unwrap();
        let expected = 10_000.0;
        assert!((f.len() as f64 - expected).abs() <= 4.0 * expected.sqrt(), "{}", f.len());
    }

    #[test]
    fn resource_guard() {
        let r = Region::new(0.0, 1.0, 0.0, 1.0);
        assert!(matches!(gen_scatterers(r, 1.1e7, 0), Err(Error::ResourceLimit(_))));
    }

    #[test]
    fn sphere_profile_shape() {
        let p = sphere_delay_profile(1e-3, 2e-3, 5e-8, 0.0).unwrap();
        assert!((p.delay_at(1e-3) - 5e-8).abs() < 1e-20);
        assert_eq!(p.delay_at(3e-3), 0.0);
        assert!(p.delay_at(-1e-3).abs() < 1e-20);
        assert!(p.dx <= presets::lambda0() / 4.0);

        let lambda = presets::lambda0();
        let tau = 0.2 * lambda / presets::C_TISSUE;
        assert!((tau - 3.774e-8).abs() < 1e-11, "{tau}");
    }

    #[test]
    fn gauss_profile_shape() {
        let p = gauss_delay_profile(0.0, 1e-3, 1.0, 0.0).unwrap();
        assert!((p.delay_at(0.0) - 1.0).abs() < 1e-15);
        assert!((p.delay_at(1e-3) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(p.delay_at(4.1e-3), 0.0);
        let tau = 2.0 * presets::lambda0() / presets::C_TISSUE;
        assert!((tau - 3.774e-7).abs() < 1e-10, "{tau}");
    }

    #[test]
    fn inclusion_profile() {
        let m = MediumConfig { c: 1540.0 };
        let zero = inclusion_delay_from_sos((0.0, 15e-3), 5e-3, 0.0, &m).unwrap();
        assert!(zero.delays.iter().all(|d| *d == 0.0));
        let fast = inclusion_delay_from_sos((0.0, 15e-3), 5e-3, 0.005, &m).unwrap();
        assert!((fast.delay_at(0.0) + 3.247e-8).abs() < 1e-11, "{}", fast.delay_at(0.0));
        assert_eq!(fast.depth, 15e-3);
        let slow = inclusion_delay_from_sos((0.0, 15e-3), 5e-3, -0.005, &m).unwrap();
        for (a, b) in fast.delays.iter().zip(&slow.delays) {
            assert_eq!(*a, -*b);
        }
        assert!(inclusion_delay_from_sos((0.0, 15e-3), 5e-3, 0.1, &m).is_err());
    }

    #[test]
    fn empty_field_gives_zero_rf() {
        let s = scene();
        let rf = synthesize_rf(&ScattererField::empty(Region::of_grid(&s.grid)), None, &s).unwrap();
        assert_eq!(rf.n_angles(), 7);
        assert_eq!(rf.n_elements(), 128);
        assert!(rf.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_way_travel_time() {
        let s = scene();
        let field = ScattererField::single(0.0, 20e-3, 1.0);
        let rf = synthesize_rf(&field, None, &s).unwrap();
        // zero tilt is the middle angle
        let k = peak_index(rf.samples.slice(ndarray::s![3, 0, ..]));
        let xe = s.transducer.element_x(0);
        let expected = (20e-3 + (xe * xe + 20e-3f64.powi(2)).sqrt()) / 1540.0;
        let t = rf.time(k);
        assert!((t - expected).abs() <= 1.0 / rf.fs() + 1e-12, "{t} vs {expected}");

        // element closest to x = 0 sees the plain 2z/c round trip
        let k = peak_index(rf.samples.slice(ndarray::s![3, 63, ..]));
        let xe = s.transducer.element_x(63);
        let exp63 = (20e-3 + (xe * xe + 20e-3f64.powi(2)).sqrt()) / 1540.0;
        assert!((2.0f64 * 20e-3 / 1540.0 - 25.97e-6).abs() < 0.01e-6);
        assert!((rf.time(k) - exp63).abs() <= 1.0 / rf.fs() + 1e-12);
    }

    #[test]
    fn screen_delay_adds_to_arrival() {
        let s = scene();
        let field = ScattererField::single(0.0, 20e-3, 1.0);
        let screen = AberratorProfile::new(0.0, -20e-3, 10e-6, vec![100e-9; 4001], "const").unwrap();
        let plain = synthesize_rf(&field, None, &s).unwrap();
        let shifted = synthesize_rf(&field, Some(&screen), &s).unwrap();
        let k0 = peak_index(plain.samples.slice(ndarray::s![3, 63, ..]));
        let k1 = peak_index(shifted.samples.slice(ndarray::s![3, 63, ..]));
        let dt = shifted.time(k1) - plain.time(k0);
        assert!((dt - 100e-9).abs() <= 1.0 / s.transducer.fs + 1e-12, "{dt}");
        assert!((shifted.time(k1) - 26.07e-6).abs() < 0.05e-6 + 1.0 / s.transducer.fs);
    }

    #[test]
    fn linear_in_scatterers_and_reproducible() {
        let s = scene();
        let r = Region::new(-3e-3, 3e-3, 10e-3, 14e-3);
        let a = gen_scatterers(r, 2e6, 1).unwrap();
        let b = gen_scatterers(r, 2e6, 2).unwrap();
        let ra = synthesize_rf(&a, None, &s).unwrap();
        let rb = synthesize_rf(&b, None, &s).unwrap();
        let rab = synthesize_rf(&a.union(&b), None, &s).unwrap();
        assert_eq!(ra.t0, rab.t0);
        let scale = rab.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((x, y), z) in ra.samples.iter().zip(rb.samples.iter()).zip(rab.samples.iter()) {
            assert!((x + y - z).abs() <= 1e-6 * scale);
        }
        let again = synthesize_rf(&a, None, &s).unwrap();
        assert_eq!(ra, again);
    }

    #[test]
    fn receive_path_ignores_screen() {
        // A screen only changes the transmit time, which is common to all
        // elements: per-element arrival differences stay those of the plain case.
        let s = scene();
        let field = ScattererField::single(2e-3, 18e-3, 1.0);
        let screen = AberratorProfile::new(0.0, -20e-3, 10e-6, vec![60e-9; 4001], "const").unwrap();
        let plain = synthesize_rf(&field, None, &s).unwrap();
        let shifted = synthesize_rf(&field, Some(&screen), &s).unwrap();
        for e in [0usize, 40, 90, 127] {
            let k0 = peak_index(plain.samples.slice(ndarray::s![0, e, ..]));
            let k1 = peak_index(shifted.samples.slice(ndarray::s![0, e, ..]));
            let d = (shifted.time(k1) - plain.time(k0) - 60e-9).abs();
            assert!(d <= 1.0 / s.transducer.fs + 1e-12);
        }
    }
}
