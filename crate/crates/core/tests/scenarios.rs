//! Full-pipeline scenarios at desk scale. Slow in debug builds.

use dpc_core::beamform::{compound_bmode, das_beamform, BeamformedStack};
use dpc_core::dpc::{compound_dpc, focus_map, project_depth, DpcRecipe, Projection, Raster, Sharpness};
use dpc_core::synth::{gen_scatterers, inclusion_delay_from_sos, synthesize_rf, Region};
use dpc_core::{presets, stats, AberratorProfile, ImageGrid, Roi, Scene};

const DENSITY: f64 = 3e7;

fn run(grid: ImageGrid, seed: u64, screen: impl Fn(&Scene) -> Option<AberratorProfile>) -> BeamformedStack {
    let scene = presets::desk_scene(grid).unwrap();
    let field = gen_scatterers(Region::of_grid(&grid), DENSITY, seed).unwrap();
    let prof = screen(&scene);
    das_beamform(&synthesize_rf(&field, prof.as_ref(), &scene).unwrap(), &grid).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().filter(|x| x.is_finite()).fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn lobe_separation_tracks_chord() {
    let grid = presets::desk_grid(2e-3, 40e-3);
    let (za, r) = (15e-3, 5e-3f64);
    for (i, y) in [0.0, 3e-3, 4e-3].into_iter().enumerate() {
        let half = (r * r - y * y).sqrt();
        let st = run(grid, 300 + i as u64, |s| Some(inclusion_delay_from_sos((0.0, za), half, -0.01, &s.medium).unwrap()));
        let row = project_depth(&compound_dpc(&st, 1, za).unwrap(), Projection::Signed);
        let imax = (0..row.len()).max_by(|a, b| row[*a].total_cmp(&row[*b])).unwrap();
        let imin = (0..row.len()).min_by(|a, b| row[*a].total_cmp(&row[*b])).unwrap();
        let sep = (grid.x(imax) - grid.x(imin)).abs();
        let ratio = sep / (2.0 * half);
        println!("y {:.1} mm: lobe separation / chord = {ratio:.2}", y * 1e3);
        assert!((ratio - 1.0).abs() <= 0.3, "y {y}: ratio {ratio}");
    }
}

#[test]
fn focus_map_sharpness_peaks_at_screen() {
    let grid = presets::desk_grid(2e-3, 50e-3);
    let za = 25e-3;
    let st = run(grid, 6, |s| Some(inclusion_delay_from_sos((0.0, za), 5e-3, 0.01, &s.medium).unwrap()));
    let zs = [za - 20e-3, za, za + 20e-3];
    let s = focus_map(&st, 1, &zs).unwrap().sharpness(Sharpness::MaxAbs);
    println!("sharpness at -20 / 0 / +20 mm: {:.3} {:.3} {:.3}", s[0], s[1], s[2]);
    assert!(s[1] >= 1.5 * s[0] && s[1] >= 1.5 * s[2], "{s:?}");
}

#[test]
fn focus_rows_are_flat_without_screen() {
    let grid = presets::desk_grid(2e-3, 40e-3);
    let za = 15e-3;
    let zs: Vec<f64> = (0..8).map(|i| 5e-3 + i as f64 * 4e-3).collect();
    let null = focus_map(&run(grid, 8, |_| None), 1, &zs).unwrap();
    let aberrated = focus_map(
        &run(grid, 8, |s| Some(inclusion_delay_from_sos((0.0, za), 5e-3, 0.01, &s.medium).unwrap())),
        1,
        &zs,
    )
    .unwrap();
    let n = max_abs(null.rows.as_slice().unwrap());
    let a = max_abs(aberrated.rows.as_slice().unwrap());
    println!("focus row peak: null {n:.3}, aberrated {a:.3}");
    assert!(n < 0.25 * a, "null {n} vs aberrated {a}");
}

#[test]
fn reference_from_other_seed_leaves_speckle_noise() {
    let grid = presets::desk_grid(2e-3, 40e-3);
    let lam = presets::lambda0();
    let roi = Roi::new(-16.0 * lam, 16.0 * lam, 5e-3, 40e-3);
    let recipe = DpcRecipe { z_s: 0.0, m: 1, filter_sigma: 4.0 * lam, enhance_p: 0 };
    let a = run(grid, 7, |_| None);
    let b = run(grid, 107, |_| None);
    let single = recipe.run(&a, None).unwrap();
    let diff = recipe.run(&a, Some(&b)).unwrap();
    let sv = stats::roi_values(single.values(), single.valid(), &grid, &roi);
    let dv = stats::roi_values(diff.values(), diff.valid(), &grid, &roi);
    let (s_sd, d_sd) = (stats::std_dev(&sv), stats::std_dev(&dv));
    println!("single std {s_sd:.3} max {:.3}; difference std {d_sd:.3} max {:.3}", max_abs(&sv), max_abs(&dv));
    // two independent speckle realizations: noise adds in quadrature
    let ratio = d_sd / s_sd;
    assert!((ratio - 2f64.sqrt()).abs() < 0.25, "std ratio {ratio}");
    assert!(max_abs(&dv) < 2.0 * 2f64.sqrt() * max_abs(&sv));
}

#[test]
fn speckle_level_report() {
    let grid = presets::desk_grid(2e-3, 40e-3);
    let bm = compound_bmode(&run(grid, 9, |_| None)).unwrap();
    let v: Vec<f64> = bm.values.iter().copied().filter(|x| x.is_finite()).collect();
    println!("speckle background mean {:.1} dB", stats::mean(&v));
}
