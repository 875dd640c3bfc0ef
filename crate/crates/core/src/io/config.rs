//! Scene configuration files (TOML).
//!
//! ```toml
//! [transducer]
//! n_elements = 128
//! pitch = 0.23e-3
//! f0 = 5.3e6            # bandwidth_sigma defaults to 0.25 f0, fs to 4 f0
//!
//! [sequence]
//! count = 7             # or: angles = ["-12deg", "0deg", "12deg"]
//! span = "12deg"        # tilts cover [-span, span]
//! m = 1
//!
//! [grid]
//! x_min = -11e-3
//! x_max = 11e-3
//! dx = 0.115e-3
//! z_min = 2e-3
//! z_max = 40e-3
//! dz = 0.15e-3
//!
//! [scatterers]
//! density = 3e7         # per m^2; default 20 per resolution cell
//! seed = 7
//!
//! [aberrator]
//! kind = "sphere"       # sphere | gauss | inclusion, or: profile = "screen.prof"
//! center_x = 0.0
//! radius = 4.65e-3
//! max_delay = 3.77e-8
//! depth = 0.0
//! ```
//!
//! Units are SI. Angles may be bare numbers (radians) or strings with a
//! `deg` / `rad` suffix.

use std::path::Path;

use serde::Deserialize;

use crate::domain::{validate_scene, AberratorProfile, AngleSpacing, ImageGrid, MediumConfig, Scene, SequenceConfig, TransducerConfig};
use crate::error::{Error, Result};
use crate::presets::BANDWIDTH_FRACTION;
use crate::synth::{default_density, AberratorSpec, Region, SynthOptions};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AngleValue {
    Radians(f64),
    Text(String),
}

impl AngleValue {
    pub fn radians(&self) -> Result<f64> {
        match self {
            AngleValue::Radians(r) => Ok(*r),
            AngleValue::Text(s) => parse_angle(s),
        }
    }
}

/// `"12deg"`, `"-0.2 rad"`, ...
pub fn parse_angle(s: &str) -> Result<f64> {
    let t = s.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("deg") {
        (n, std::f64::consts::PI / 180.0)
    } else if let Some(n) = t.strip_suffix("rad") {
        (n, 1.0)
    } else {
        return Err(Error::invalid(format!("angle `{s}` needs a `deg` or `rad` suffix")));
    };
    let v: f64 = num.trim().parse().map_err(|_| Error::invalid(format!("bad angle `{s}`")))?;
    Ok(v * scale)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransducerSection {
    n_elements: usize,
    pitch: f64,
    f0: f64,
    bandwidth_sigma: Option<f64>,
    fs: Option<f64>,
    element_x0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceSection {
    angles: Option<Vec<AngleValue>>,
    count: Option<usize>,
    span: Option<AngleValue>,
    #[serde(default)]
    spacing: AngleSpacing,
    #[serde(default = "one")]
    m: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    x_min: f64,
    x_max: f64,
    dx: f64,
    z_min: f64,
    z_max: f64,
    dz: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScattererSection {
    density: Option<f64>,
    #[serde(default)]
    seed: u64,
    /// `[x_min, x_max, z_min, z_max]`; defaults to the grid.
    region: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum AberratorSection {
    File { profile: String, depth: Option<f64> },
    Spec(AberratorSpec),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    #[serde(default)]
    sigma: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    transducer: TransducerSection,
    sequence: SequenceSection,
    #[serde(default)]
    medium: MediumConfig,
    grid: GridSection,
    #[serde(default)]
    scatterers: ScattererSection,
    aberrator: Option<AberratorSection>,
    #[serde(default)]
    noise: NoiseSection,
}

/// Everything `simulate` needs, resolved from a scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSetup {
    pub scene: Scene,
    pub region: Region,
    pub density: f64,
    pub seed: u64,
    pub synth: SynthOptions,
}

/// Parse a scene file; relative profile paths resolve against `base_dir`.
pub fn parse_scene(text: &str, base_dir: &Path) -> Result<SimulationSetup> {
    let f: SceneFile = toml::from_str(text).map_err(|e| Error::invalid(format!("scene file: {e}")))?;
    let t = &f.transducer;
    let mut transducer = TransducerConfig::centered(
        t.n_elements,
        t.pitch,
        t.f0,
        t.bandwidth_sigma.unwrap_or(BANDWIDTH_FRACTION * t.f0),
        t.fs.unwrap_or(4.0 * t.f0),
    );
    if let Some(x0) = t.element_x0 {
        transducer.element_x0 = x0;
    }

    let s = &f.sequence;
    let sequence = match (&s.angles, s.count, &s.span) {
        (Some(list), None, None) => {
            SequenceConfig::new(list.iter().map(AngleValue::radians).collect::<Result<_>>()?, s.m)
        }
        (None, Some(count), Some(span)) => SequenceConfig::symmetric(count, span.radians()?, s.spacing, s.m),
        _ => return Err(Error::invalid("sequence needs either `angles` or both `count` and `span`")),
    };

    let g = &f.grid;
    let grid = ImageGrid::spanning(g.x_min, g.x_max, g.dx, g.z_min, g.z_max, g.dz);

    let aberrator: Option<AberratorProfile> = match &f.aberrator {
        None => None,
        Some(AberratorSection::File { profile, depth }) => {
            let p = super::read_profile(&base_dir.join(profile))?;
            Some(match depth {
                Some(d) => p.with_depth(*d),
                None => p,
            })
        }
        Some(AberratorSection::Spec(spec)) => Some(spec.build(&f.medium)?),
    };

    let scene = validate_scene(transducer, sequence, f.medium, grid, aberrator)?;
    let region = match f.scatterers.region {
        Some([x0, x1, z0, z1]) => Region::new(x0, x1, z0, z1),
        None => Region::of_grid(&grid),
    };
    let density = f.scatterers.density.unwrap_or_else(|| default_density(&scene));
    if !(density >= 0.0 && density.is_finite()) {
        return Err(Error::invalid(format!("scatterer density must be >= 0, got {density}")));
    }
    if !(f.noise.sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be >= 0"));
    }
    Ok(SimulationSetup {
        scene,
        region,
        density,
        seed: f.scatterers.seed,
        synth: SynthOptions { noise_sigma: f.noise.sigma, noise_seed: f.noise.seed },
    })
}

pub fn load_scene(path: &Path) -> Result<SimulationSetup> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text, path.parent().unwrap_or(Path::new(".")))
}
