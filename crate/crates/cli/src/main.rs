//! `dpcbench`: every pipeline stage as a subcommand.
//!
//! Lengths are meters unless suffixed (`15mm`, `200um`, `0.015m`). Exit
//! status is 0 on success, 2 for invalid input, 1 for runtime failures.

mod args;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dpc_core::beamform::{compound_bmode, das_beamform_with, BeamformOptions, F_NUMBER};
use dpc_core::dpc::{
    cmode_assemble, compound_dpc, default_filter_sigma, focus_map_with, gaussian_filter, lateral_moment,
    project_depth, DpcRecipe, FocusOptions, Projection, Sharpness,
};
use dpc_core::forward::{compare_images, eval_forward_dpc, ray_limit_dpc, ForwardParams};
use dpc_core::io::export::{write_csv, write_pgm, DisplayPlane, GrayMap};
use dpc_core::io::{self, config};
use dpc_core::synth::{gauss_delay_profile, gen_scatterers, inclusion_delay_from_sos, sphere_delay_profile, synthesize_rf_with};
use dpc_core::{AberratorProfile, Error, ImageGrid, MediumConfig, Roi, Scene};

use args::{parse_length, parse_roi, parse_slice, Slice};

/// Environment variable selecting the worker-thread count.
const WORKERS_VAR: &str = "DPC_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "dpcbench", version, about = "Differential phase contrast workbench for plane-wave ultrasound")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize RF data from a scene file.
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides the scatterer seed of the scene file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scatterer density (per m^2).
        #[arg(long)]
        density: Option<f64>,
    },
    /// Beamform RF data into a per-tilt complex stack.
    Beamform {
        rf: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides the grid stored with the RF data's scene.
        #[arg(long)]
        like: Option<PathBuf>,
        #[arg(long, default_value_t = F_NUMBER)]
        f_number: f64,
    },
    /// Compounded B-mode image in dB.
    Bmode {
        stack: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compounded DPC image at shear depth `--zs`.
    Dpc {
        stack: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_length)]
        zs: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Gaussian filter width; defaults to two wavelengths, 0 disables it.
        #[arg(long, value_parser = parse_length)]
        sigma: Option<f64>,
        /// Reference (aberration-free) stack processed identically and subtracted.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Raise to this odd power and integrate laterally.
        #[arg(long, default_value_t = 0)]
        enhance: u32,
    },
    /// Depth-projected DPC rows for a list of shear depths.
    Focusmap {
        stack: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_length, requires_all = ["to", "step"], conflicts_with = "n")]
        from: Option<f64>,
        #[arg(long, value_parser = parse_length)]
        to: Option<f64>,
        #[arg(long, value_parser = parse_length)]
        step: Option<f64>,
        /// Uniformly spaced depths over the grid, as the service does.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, value_parser = parse_length, default_value = "0")]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = ProjectionArg::Signed)]
        projection: ProjectionArg,
        #[arg(long, value_enum, default_value_t = MetricArg::MaxAbs)]
        metric: MetricArg,
    },
    /// Forward-model DPC image of a screen profile.
    Forward {
        #[arg(long)]
        profile: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Take grid and probe from a scene file.
        #[arg(long, conflicts_with = "like", required_unless_present = "like")]
        scene: Option<PathBuf>,
        /// Take grid and probe from an existing stack or image.
        #[arg(long)]
        like: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        phi_kappa: f64,
        /// Geometric-ray limit (very small coherence width).
        #[arg(long, conflicts_with = "phi_kappa")]
        ray_limit: bool,
    },
    /// Pearson r and sign agreement of two images over an ROI.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// `x_min,x_max,z_min,z_max`
        #[arg(long, value_parser = parse_roi, allow_hyphen_values = true)]
        roi: Roi,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Assemble a C-mode image from elevation slices.
    Cmode {
        /// `y=stack.cimg`, repeated in any order.
        #[arg(long = "slice", value_parser = parse_slice, required = true, allow_hyphen_values = true)]
        slices: Vec<Slice>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_length)]
        zs: f64,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, value_parser = parse_length, default_value = "0")]
        sigma: f64,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        stack: Option<PathBuf>,
        #[arg(long = "ref", requires = "stack")]
        reference: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of static files served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Grayscale PGM: signed colormap, or `--db` for B-mode files.
    ExportPgm {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        db: bool,
    },
    /// CSV table with coordinates.
    ExportCsv {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Write a screen profile file.
    Profile {
        #[arg(value_enum)]
        kind: ProfileKind,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_length, default_value = "0")]
        depth: f64,
        #[arg(long, value_parser = parse_length, default_value = "0", allow_hyphen_values = true)]
        center_x: f64,
        /// Sphere or inclusion radius, gaussian waist, flat half-width.
        #[arg(long, value_parser = parse_length)]
        width: f64,
        /// Peak delay in seconds (sphere, gauss) or constant delay (flat).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delay: f64,
        /// Relative sound-speed contrast (inclusion).
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dc_over_c: f64,
        #[arg(long, default_value_t = 1540.0)]
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Signed,
    Absolute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    MaxAbs,
    Gradient,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileKind {
    Gauss,
    Sphere,
    Inclusion,
    Flat,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let invalid = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_validation));
    if invalid {
        2
    } else {
        1
    }
}

fn configure_workers() -> Result<()> {
    let Ok(v) = std::env::var(WORKERS_VAR) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Validation(format!("{WORKERS_VAR} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// The invocation, recorded in every sidecar.
fn provenance() -> String {
    std::env::args()
        .map(|a| {
            if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./=,:+".contains(c)) {
                a
            } else {
                format!("'{}'", a.replace('\'', r"'\''"))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn run(cmd: Command) -> Result<()> {
    let prov = provenance();
    match cmd {
        Command::Simulate { scene, out, seed, density } => {
            let setup = config::load_scene(&scene).with_context(|| format!("loading {}", scene.display()))?;
            let seed = seed.unwrap_or(setup.seed);
            let density = density.unwrap_or(setup.density);
            let field = gen_scatterers(setup.region, density, seed)?;
            let rf = synthesize_rf_with(&field, setup.scene.aberrator.as_ref(), &setup.scene, &setup.synth)?;
            io::write_rf(&out, &rf, &prov)?;
            eprintln!("{} scatterers, {:?} samples -> {}", field.len(), rf.samples.dim(), out.display());
        }
        Command::Beamform { rf, out, like, f_number } => {
            let rf = io::read_rf(&rf)?;
            let grid = match like {
                Some(p) => header_grid(&p)?,
                None => rf.scene.grid,
            };
            let stack = das_beamform_with(&rf, &grid, &BeamformOptions { f_number })?;
            io::write_stack(&out, &stack, &prov)?;
        }
        Command::Bmode { stack, out } => {
            let stack = io::read_stack(&stack)?;
            let img = compound_bmode(&stack)?;
            io::write_image(&out, &img, json!({ "provenance_kind": "bmode", "unit": "dB" }), &prov)?;
        }
        Command::Dpc { stack, out, zs, m, sigma, reference, enhance } => {
            let stack = io::read_stack(&stack)?;
            let reference = reference.as_deref().map(io::read_stack).transpose()?;
            let recipe = DpcRecipe { z_s: zs, m, filter_sigma: sigma.unwrap_or_else(|| default_filter_sigma(&stack.scene)), enhance_p: enhance };
            let img = recipe.run(&stack, reference.as_ref())?;
            let kind = if reference.is_some() { "reference-corrected" } else { "pipeline" };
            let params = io::dpc_params(recipe.z_s, recipe.m, recipe.filter_sigma, recipe.enhance_p, reference.is_some(), kind);
            io::write_image(&out, &img, params, &prov)?;
        }
        Command::Focusmap { stack, out, from, to, step, n, m, sigma, projection, metric } => {
            let stack = io::read_stack(&stack)?;
            let zs = match (from, to, step, n) {
                (Some(a), Some(b), Some(s), None) => depth_range(a, b, s)?,
                (None, None, None, Some(n)) => uniform_depths(&stack.grid, n)?,
                _ => return Err(Error::Validation("give either --from/--to/--step or --n".into()).into()),
            };
            let projection = match projection {
                ProjectionArg::Signed => Projection::Signed,
                ProjectionArg::Absolute => Projection::Absolute,
            };
            let map = focus_map_with(&stack, m, &zs, &FocusOptions { projection, filter_sigma: sigma })?;
            io::write_focusmap(&out, &map, &prov)?;
            let metric = match metric {
                MetricArg::MaxAbs => Sharpness::MaxAbs,
                MetricArg::Gradient => Sharpness::GradientEnergy,
            };
            println!("{}", json!({ "best_depth": map.best_depth(metric), "sharpness": map.sharpness(metric), "zs_list": map.zs_list }));
        }
        Command::Forward { profile, out, scene, like, m, phi_kappa, ray_limit } => {
            let profile = io::read_profile(&profile)?;
            let (scene, grid) = match (scene, like) {
                (Some(s), _) => {
                    let setup = config::load_scene(&s)?;
                    let g = setup.scene.grid;
                    (setup.scene, g)
                }
                (None, Some(p)) => (header_scene(&p)?, header_grid(&p)?),
                (None, None) => unreachable!("clap requires one of --scene/--like"),
            };
            let params = ForwardParams::for_scene(&scene, m, phi_kappa);
            let img = if ray_limit {
                ray_limit_dpc(&profile, &params, &grid)?
            } else {
                eval_forward_dpc(&profile, &params, &grid)?
            };
            let mut p = io::dpc_params(profile.depth, 1, 0.0, 0, false, "forward-model");
            p["forward"] = json!({ "params": params, "ray_limit": ray_limit });
            io::write_image(&out, &img, p, &prov)?;
        }
        Command::Compare { a, b, roi, out } => {
            let a = io::read_image(&a)?;
            let b = io::read_image(&b)?;
            let report = compare_images(&a.image, &b.image, &roi)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                io::write_atomic(&out, text.as_bytes())?;
            }
            println!("{text}");
        }
        Command::Cmode { mut slices, out, zs, m, sigma } => {
            slices.sort_by(|a, b| a.y.total_cmp(&b.y));
            let mut rows = Vec::with_capacity(slices.len());
            let mut lateral: Option<(f64, f64, usize)> = None;
            for s in &slices {
                let stack = io::read_stack(&s.path).with_context(|| format!("slice y = {}", s.y))?;
                let g = stack.grid;
                match lateral {
                    None => lateral = Some((g.x0, g.dx, g.nx)),
                    Some(l) if l != (g.x0, g.dx, g.nx) => {
                        return Err(Error::Mismatch(format!("slice y = {} has a different lateral grid", s.y)).into())
                    }
                    _ => {}
                }
                let img = compound_dpc(&stack, m, zs)?;
                let img = if sigma > 0.0 { gaussian_filter(&img, sigma)? } else { img };
                rows.push((s.y, project_depth(&img, Projection::Signed)));
            }
            let (x0, dx, _) = lateral.expect("at least one slice");
            let cmode = cmode_assemble(&rows, zs)?;
            io::write_cmode(&out, &cmode, x0, dx, &prov)?;
            let moments: Vec<f64> = rows.iter().map(|(_, r)| lateral_moment(r, x0, dx, 0.0)).collect();
            println!("{}", json!({ "ys": cmode.ys, "lateral_moment": moments }));
        }
        Command::Serve { stack, reference, addr, static_dir } => {
            let session = match stack {
                Some(p) => Some(dpc_serve::Session::load(&p, reference.as_deref())?),
                None => None,
            };
            let state = Arc::new(dpc_serve::AppState::new(session, static_dir));
            eprintln!("listening on http://{addr}");
            tokio::runtime::Runtime::new()?.block_on(dpc_serve::run(addr, state))?;
        }
        Command::ExportPgm { input, out, db } => {
            let plane = display_plane(&input)?;
            write_pgm(&out, &plane, if db { GrayMap::Decibel } else { GrayMap::Signed })?;
        }
        Command::ExportCsv { input, out } => {
            write_csv(&out, &display_plane(&input)?)?;
        }
        Command::Profile { kind, out, depth, center_x, width, delay, dc_over_c, c } => {
            let p = match kind {
                ProfileKind::Gauss => gauss_delay_profile(center_x, width, delay, depth)?,
                ProfileKind::Sphere => sphere_delay_profile(center_x, width, delay, depth)?,
                ProfileKind::Inclusion => inclusion_delay_from_sos((center_x, depth), width, dc_over_c, &MediumConfig { c })?,
                ProfileKind::Flat => flat_profile(center_x, width, delay, depth)?,
            };
            io::write_profile(&out, &p)?;
        }
    }
    Ok(())
}

fn flat_profile(center_x: f64, half_width: f64, delay: f64, depth: f64) -> dpc_core::Result<AberratorProfile> {
    let dx = dpc_core::synth::PROFILE_SPACING;
    let n = (half_width / dx).ceil() as usize;
    AberratorProfile::new(depth, center_x - n as f64 * dx, dx, vec![delay; 2 * n + 1], format!("flat tau={delay:.3e}"))
}

fn depth_range(from: f64, to: f64, step: f64) -> dpc_core::Result<Vec<f64>> {
    if !(step > 0.0) || !(to >= from) {
        return Err(Error::Validation("need --step > 0 and --to >= --from".into()));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| from + i as f64 * step).collect())
}

/// Same spacing as the service's `/api/focusmap?n=K`.
fn uniform_depths(grid: &ImageGrid, n: usize) -> dpc_core::Result<Vec<f64>> {
    if n == 0 || n > dpc_serve::MAX_FOCUS_ROWS {
        return Err(Error::Validation(format!("--n must be in 1..={}", dpc_serve::MAX_FOCUS_ROWS)));
    }
    Ok(dpc_serve::focus_depths(grid, n))
}

fn header_grid(path: &Path) -> Result<ImageGrid> {
    io::read_header(path)?
        .grid
        .ok_or_else(|| Error::Format(format!("{} carries no grid", path.display())).into())
}

fn header_scene(path: &Path) -> Result<Scene> {
    let h = io::read_header(path)?;
    let g = h.grid.ok_or_else(|| Error::Format(format!("{} carries no grid", path.display())))?;
    let scene = h.scene.ok_or_else(|| Error::Format(format!("{} carries no scene", path.display())))?;
    Ok(scene.with_grid(g)?)
}

fn display_plane(path: &Path) -> Result<DisplayPlane> {
    let (h, data) = io::read_plane(path)?;
    Ok(DisplayPlane::from_file(&h, data)?)
}
