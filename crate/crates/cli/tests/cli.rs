use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use dpc_core::dpc::Sharpness;
use dpc_core::io;

const SCENE: &str = r#"
[transducer]
n_elements = 64
pitch = 0.23e-3
f0 = 5.3e6

[sequence]
count = 7
span = "12deg"

[grid]
x_min = -3e-3
x_max = 3e-3
dx = 0.115e-3
z_min = 2e-3
z_max = 14e-3
dz = 0.1e-3

[scatterers]
density = 2e7
seed = 4

[aberrator]
kind = "sphere"
center_x = 0.0
radius = 1.5e-3
max_delay = 1.1e-8
depth = 6e-3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpcbench"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dpcbench")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Scene, RF data and stack shared by the tests in this file.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        fs::write(f.path("scene.toml"), SCENE).unwrap();
        ok(&["simulate", "--scene", s(&f.path("scene.toml")), "-o", s(&f.path("a.rf"))]);
        ok(&["beamform", s(&f.path("a.rf")), "-o", s(&f.path("a.cimg"))]);
        f
    })
}

#[test]
fn stages_chain_and_record_provenance() {
    let f = fixture();
    let h = io::read_header(&f.path("a.cimg")).unwrap();
    assert_eq!(h.dims[0], 7);
    assert_eq!(h.dims[3], 2);
    assert!(h.provenance.contains("beamform"));
    ok(&["bmode", s(&f.path("a.cimg")), "-o", s(&f.path("b.img"))]);
    let b = io::read_image(&f.path("b.img")).unwrap();
    let max = b.image.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max, 0.0);
}

#[test]
fn artifacts_reproduce_from_provenance() {
    let f = fixture();
    let h = io::read_header(&f.path("a.rf")).unwrap();
    let argv: Vec<&str> = h.provenance.split(' ').collect();
    let again = f.path("again.rf");
    let mut args: Vec<&str> = argv[1..].to_vec();
    let o = args.iter().position(|a| *a == "-o").unwrap();
    args[o + 1] = s(&again);
    ok(&args);
    assert_eq!(fs::read(f.path("a.rf")).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn seed_changes_speckle() {
    let f = fixture();
    let other = f.path("seed9.rf");
    ok(&["simulate", "--scene", s(&f.path("scene.toml")), "--seed", "9", "-o", s(&other)]);
    assert_ne!(fs::read(f.path("a.rf")).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn dpc_and_compare_self() {
    let f = fixture();
    let img = f.path("d.img");
    ok(&["dpc", s(&f.path("a.cimg")), "--zs", "6mm", "--m", "1", "-o", s(&img)]);
    let h = io::read_header(&img).unwrap();
    assert_eq!(h.param::<f64>("z_s").unwrap(), 6e-3);
    assert!((h.param::<f64>("filter_sigma").unwrap() - 2.0 * 1540.0 / 5.3e6).abs() < 1e-12);
    let report: Value = serde_json::from_str(&ok(&["compare", s(&img), s(&img), "--roi", "-2mm,2mm,7mm,12mm"])).unwrap();
    assert_eq!(report["pearson_r"], 1.0);
    assert_eq!(report["sign_agreement"], 1.0);
}

#[test]
fn dpc_reference_and_enhance() {
    let f = fixture();
    let img = f.path("r.img");
    let a_path = f.path("a.cimg");
    let a = s(&a_path);
    ok(&["dpc", a, "--zs", "6mm", "--ref", a, "--enhance", "3", "-o", s(&img)]);
    let i = io::read_image(&img).unwrap();
    assert!(i.image.values.iter().all(|v| *v == 0.0));
    assert_eq!(i.header.param::<bool>("ref_correct").unwrap(), true);
}

#[test]
fn forward_flat_profile_is_zero() {
    let f = fixture();
    let prof = f.path("flat.prof");
    ok(&["profile", "flat", "--width", "5mm", "--delay", "3e-8", "--depth", "1mm", "-o", s(&prof)]);
    let img = f.path("fwd0.img");
    ok(&["forward", "--profile", s(&prof), "--like", s(&f.path("a.cimg")), "-o", s(&img)]);
    let i = io::read_image(&img).unwrap();
    assert!(i.image.values.iter().all(|v| *v == 0.0));
    assert_eq!(i.header.param::<String>("provenance_kind").unwrap(), "forward-model");

    let zero = f.path("zero.prof");
    ok(&["profile", "gauss", "--width", "1mm", "--delay", "0", "-o", s(&zero)]);
    ok(&["forward", "--profile", s(&zero), "--scene", s(&f.path("scene.toml")), "-o", s(&img)]);
    assert!(io::read_image(&img).unwrap().image.values.iter().all(|v| *v == 0.0));
}

#[test]
fn forward_ray_limit_runs() {
    let f = fixture();
    let prof = f.path("g.prof");
    ok(&["profile", "gauss", "--width", "1mm", "--delay", "1e-7", "--depth", "1mm", "-o", s(&prof)]);
    let img = f.path("ray.img");
    ok(&["forward", "--profile", s(&prof), "--like", s(&f.path("a.cimg")), "--ray-limit", "-o", s(&img)]);
    let i = io::read_image(&img).unwrap();
    assert!(i.image.values.iter().any(|v| v.abs() > 0.01));
}

#[test]
fn forward_sphere_follows_pipeline() {
    // the fixture probe with the sphere moved just above the grid
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    fs::write(p("scene.toml"), SCENE.replace("depth = 6e-3", "depth = 1e-3")).unwrap();
    ok(&["simulate", "--scene", s(&p("scene.toml")), "-o", s(&p("a.rf"))]);
    ok(&["beamform", s(&p("a.rf")), "-o", s(&p("a.cimg"))]);
    ok(&["profile", "sphere", "--width", "1.5mm", "--delay", "1.1e-8", "--depth", "1mm", "-o", s(&p("s.prof"))]);
    ok(&["forward", "--profile", s(&p("s.prof")), "--like", s(&p("a.cimg")), "-o", s(&p("fwd.img"))]);
    ok(&["dpc", s(&p("a.cimg")), "--zs", "1mm", "-o", s(&p("dpc.img"))]);
    let report: Value =
        serde_json::from_str(&ok(&["compare", s(&p("dpc.img")), s(&p("fwd.img")), "--roi=-1.5mm,1.5mm,3mm,14mm"])).unwrap();
    println!("{report}");
    assert!(report["pearson_r"].as_f64().unwrap() > 0.5, "{report}");
}

#[test]
fn exit_codes() {
    let f = fixture();
    let a_path = f.path("a.cimg");
    let a = s(&a_path);
    let out = f.path("never.img");
    let code = |args: &[&str]| run(args).status.code().unwrap();
    assert_eq!(code(&["dpc", a, "--zs", "1.0", "-o", s(&out)]), 2);
    assert_eq!(code(&["dpc", a, "--zs", "6mm", "--m", "0", "-o", s(&out)]), 2);
    assert_eq!(code(&["dpc", a, "--zs", "6mm", "--enhance", "2", "-o", s(&out)]), 2);
    assert_eq!(code(&["dpc", a, "--zs", "6mm", "--bogus", "-o", s(&out)]), 2);
    assert_eq!(code(&["focusmap", a, "--n", "3", "--from", "3mm", "--to", "5mm", "--step", "1mm", "-o", s(&out)]), 2);
    assert_eq!(code(&["dpc", s(&f.path("missing.cimg")), "--zs", "6mm", "-o", s(&out)]), 1);
    assert!(!out.exists());
    assert!(!io::sidecar_path(&out).exists());

    let bad = bin().env("DPC_WORKERS", "zero").args(["dpc", a, "--zs", "6mm", "-o", s(&out)]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_output() {
    let f = fixture();
    let a_path = f.path("a.cimg");
    let a = s(&a_path);
    let one = f.path("w1.img");
    let four = f.path("w4.img");
    for (n, p) in [("1", &one), ("4", &four)] {
        let o = bin().env("DPC_WORKERS", n).args(["dpc", a, "--zs", "8mm", "-o", s(p)]).output().unwrap();
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&one).unwrap(), fs::read(&four).unwrap());
}

#[test]
fn exports() {
    let f = fixture();
    let img = f.path("e.img");
    ok(&["dpc", s(&f.path("a.cimg")), "--zs", "6mm", "-o", s(&img)]);
    let pgm = f.path("e.pgm");
    ok(&["export-pgm", s(&img), "-o", s(&pgm)]);
    let bytes = fs::read(&pgm).unwrap();
    let h = io::read_header(&img).unwrap();
    let (nx, nz) = (h.dims[0], h.dims[1]);
    let head = format!("P5\n{nx} {nz}\n255\n");
    assert!(bytes.starts_with(head.as_bytes()));
    assert_eq!(bytes.len(), head.len() + nx * nz);

    ok(&["bmode", s(&f.path("a.cimg")), "-o", s(&f.path("eb.img"))]);
    ok(&["export-pgm", s(&f.path("eb.img")), "--db", "-o", s(&f.path("eb.pgm"))]);
    assert!(fs::read(f.path("eb.pgm")).unwrap().contains(&255));

    let csv = f.path("e.csv");
    ok(&["export-csv", s(&img), "-o", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), nz + 1);
    assert!(lines[0].starts_with("coord_m,"));
    assert_eq!(lines[1].split(',').count(), nx + 1);

    assert_eq!(run(&["export-pgm", s(&f.path("a.cimg")), "-o", s(&f.path("x.pgm"))]).status.code(), Some(1));
}

#[test]
fn cmode_from_slices() {
    let f = fixture();
    let a_path = f.path("a.cimg");
    let a = s(&a_path);
    let out = f.path("c.img");
    let stdout = ok(&["cmode", "--slice", &format!("1mm={a}"), "--slice", &format!("-1mm={a}"), "--zs", "6mm", "-o", s(&out)]);
    let h = io::read_header(&out).unwrap();
    assert_eq!(h.dims[0], 2);
    assert_eq!(h.param::<Vec<f64>>("ys").unwrap(), vec![-1e-3, 1e-3]);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["lateral_moment"].as_array().unwrap().len(), 2);
    ok(&["export-csv", s(&out), "-o", s(&f.path("c.csv"))]);
    let dup = run(&["cmode", "--slice", &format!("1mm={a}"), "--slice", &format!("1mm={a}"), "--zs", "6mm", "-o", s(&out)]);
    assert_eq!(dup.status.code(), Some(2));
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let (parts, body) = resp.into_parts();
    (parts.status, parts.headers, body.collect().await.unwrap().to_bytes().to_vec())
}

fn served(stack: &Path, reference: Option<&Path>) -> axum::Router {
    let session = dpc_serve::Session::load(stack, reference).unwrap();
    dpc_serve::router(Arc::new(dpc_serve::AppState::new(Some(session), None)))
}

#[tokio::test]
async fn service_bytes_match_cli() {
    let f = fixture();
    let stack = f.path("a.cimg");
    let app = served(&stack, Some(&stack));
    for (args, body) in [
        (vec!["--zs", "6mm"], json!({"z_s_m": 6e-3})),
        (vec!["--zs", "9mm", "--m", "2", "--sigma", "0"], json!({"z_s_m": 9e-3, "m": 2, "filter_sigma_m": 0.0})),
        (vec!["--zs", "6mm", "--enhance", "3"], json!({"z_s_m": 6e-3, "enhance_p": 3})),
        (vec!["--zs", "6mm", "--ref", s(&stack)], json!({"z_s_m": 6e-3, "ref_correct": true})),
    ] {
        let out = f.path("parity.img");
        let mut argv = vec!["dpc", s(&stack), "-o", s(&out)];
        argv.extend(args);
        ok(&argv);
        let req = Request::post("/api/dpc")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let (status, headers, bytes) = call(&app, req).await;
        assert_eq!(status, StatusCode::OK);
        let h = io::read_header(&out).unwrap();
        assert_eq!(headers["x-dims"], format!("{},{}", h.dims[0], h.dims[1]).as_str());
        assert_eq!(bytes, fs::read(&out).unwrap(), "{body}");
    }
}

#[tokio::test]
async fn service_focusmap_matches_cli() {
    let f = fixture();
    let stack = f.path("a.cimg");
    let out = f.path("fm.focusmap");
    let stdout = ok(&["focusmap", s(&stack), "--n", "13", "-o", s(&out)]);
    let cli: Value = serde_json::from_str(&stdout).unwrap();
    let cli_best = cli["best_depth"].as_f64().unwrap();

    let app = served(&stack, None);
    let (status, headers, bytes) = call(&app, Request::get("/api/focusmap?n=13").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(bytes, fs::read(&out).unwrap());
    let zs: Vec<f64> = serde_json::from_str(headers["x-zs"].to_str().unwrap()).unwrap();
    let map = io::read_focusmap(&out).unwrap();
    assert_eq!(zs, map.zs_list);
    let step = zs[1] - zs[0];
    assert!((map.best_depth(Sharpness::MaxAbs) - cli_best).abs() <= step);

    ok(&["focusmap", s(&stack), "--from", "3mm", "--to", "13mm", "--step", "1mm", "-o", s(&out)]);
    assert_eq!(io::read_focusmap(&out).unwrap().zs_list.len(), 11);
}

#[test]
fn bundled_sphere_scene_shows_compounding_gain() {
    use dpc_core::dpc::{gaussian_filter, pair_phase, shear_untilt, Raster};
    use dpc_core::{presets, stats, Roi};

    let dir = tempfile::tempdir().unwrap();
    let scene = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/sphere.toml");
    let (rf, st, img) = (dir.path().join("a.rf"), dir.path().join("a.cimg"), dir.path().join("a.img"));
    ok(&["simulate", "--scene", s(&scene), "-o", s(&rf)]);
    ok(&["beamform", s(&rf), "-o", s(&st)]);
    ok(&["dpc", s(&st), "--zs", "0", "--m", "1", "-o", s(&img)]);

    let lam = presets::lambda0();
    let compounded = io::read_image(&img).unwrap().image;
    let grid = *compounded.grid();
    let roi = Roi::new(-16.0 * lam, 16.0 * lam, 5e-3, 40e-3);
    let stack = io::read_stack(&st).unwrap();
    let pair = pair_phase(&stack, 3, 1).unwrap();
    let pair = gaussian_filter(&shear_untilt(&pair, pair.theta_c, 0.0).unwrap(), 2.0 * lam).unwrap();
    let c = stats::mean_abs(&stats::roi_values(compounded.values(), compounded.valid(), &grid, &roi));
    let p = stats::mean_abs(&stats::roi_values(pair.values(), pair.valid(), &grid, &roi));
    let gain = c / p;
    assert!((4.0..=8.0).contains(&gain), "gain {gain}");
}
