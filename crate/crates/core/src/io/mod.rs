//! On-disk formats: raw little-endian `f32` payloads with a JSON sidecar
//! (`<path>.meta.json`), scene configuration files, profile files, and
//! image exports.
//!
//! Payload layouts (row-major, last index fastest):
//!
//! | kind       | dims                          |
//! |------------|-------------------------------|
//! | `rf`       | `[angles, elements, samples]` |
//! | `cimg`     | `[angles, nx, nz, 2]` (re, im interleaved) |
//! | `img`      | `[nx, nz]`, invalid pixels stored as NaN   |
//! | `focusmap` | `[n_zs, nx]`                  |

pub mod config;
pub mod export;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::beamform::BeamformedStack;
use crate::domain::{AberratorProfile, ImageGrid, Scene};
use crate::dpc::{CModeImage, FocusMap, Raster};
use crate::error::{Error, Result};
use crate::image::ScalarImage;
use crate::synth::RfDataset;

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Rf,
    Cimg,
    Img,
    Focusmap,
}

impl DataKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DataKind::Rf => "rf",
            DataKind::Cimg => "cimg",
            DataKind::Img => "img",
            DataKind::Focusmap => "focusmap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarHeader {
    pub version: u32,
    pub kind: DataKind,
    pub dtype: String,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<ImageGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    /// Command line that produced the file.
    #[serde(default)]
    pub provenance: String,
    /// Kind-specific parameters (`t0`, `z_s`, `zs_list`, seeds, ...).
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl SidecarHeader {
    pub fn new(kind: DataKind, dims: Vec<usize>) -> Self {
        Self {
            version: FORMAT_VERSION,
            kind,
            dtype: DTYPE.into(),
            dims,
            grid: None,
            scene: None,
            provenance: String::new(),
            params: Map::new(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(key.into(), serde_json::to_value(value).expect("serializable parameter"));
    }

    pub fn param<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self.params.get(key).ok_or_else(|| Error::Format(format!("sidecar lacks parameter `{key}`")))?;
        serde_json::from_value(v.clone()).map_err(|e| Error::Format(format!("parameter `{key}`: {e}")))
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unknown format version {}", self.version)));
        }
        if self.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype `{}`", self.dtype)));
        }
        if self.dims.is_empty() {
            return Err(Error::Format("empty dims".into()));
        }
        Ok(())
    }

    fn expect_kind(&self, kind: DataKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!("expected a `{}` file, found `{}`", kind.as_str(), self.kind.as_str())));
        }
        Ok(())
    }

    fn expect_rank(&self, rank: usize) -> Result<()> {
        if self.dims.len() != rank {
            return Err(Error::Format(format!("expected {rank} dims, found {:?}", self.dims)));
        }
        Ok(())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_f32(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!("payload length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn write_dataset(path: &Path, payload: &[f32], header: &SidecarHeader) -> Result<()> {
    header.validate()?;
    if payload.len() != header.element_count() {
        return Err(Error::Mismatch(format!(
            "payload has {} values, dims {:?} need {}",
            payload.len(),
            header.dims,
            header.element_count()
        )));
    }
    let meta = serde_json::to_vec_pretty(header).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &encode_f32(payload))?;
    write_atomic(&sidecar_path(path), &meta)
}

pub fn read_header(path: &Path) -> Result<SidecarHeader> {
    let meta_path = sidecar_path(path);
    let text = match fs::read(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::Format(format!("missing sidecar {}", meta_path.display())));
        }
        Err(e) => return Err(e.into()),
    };
    let header: SidecarHeader =
        serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    header.validate()?;
    Ok(header)
}

pub fn read_dataset(path: &Path) -> Result<(Vec<f32>, SidecarHeader)> {
    let header = read_header(path)?;
    let bytes = fs::read(path)?;
    let need = header.element_count() * 4;
    if bytes.len() != need {
        return Err(Error::Format(format!(
            "size mismatch: {} holds {} bytes, dims {:?} need {need}",
            path.display(),
            bytes.len(),
            header.dims
        )));
    }
    Ok((decode_f32(&bytes)?, header))
}

fn scene_of(header: &SidecarHeader) -> Result<Scene> {
    header.scene.clone().ok_or_else(|| Error::Format("sidecar lacks the scene".into()))
}

fn grid_of(header: &SidecarHeader) -> Result<ImageGrid> {
    header.grid.ok_or_else(|| Error::Format("sidecar lacks the grid".into()))
}

pub fn write_rf(path: &Path, rf: &RfDataset, provenance: &str) -> Result<()> {
    let mut h = SidecarHeader::new(DataKind::Rf, rf.samples.shape().to_vec()).with_provenance(provenance);
    h.scene = Some(rf.scene.clone());
    h.set("t0", rf.t0);
    let payload: Vec<f32> = rf.samples.iter().map(|v| *v as f32).collect();
    write_dataset(path, &payload, &h)
}

pub fn read_rf(path: &Path) -> Result<RfDataset> {
    let (data, h) = read_dataset(path)?;
    h.expect_kind(DataKind::Rf)?;
    h.expect_rank(3)?;
    let samples = Array3::from_shape_vec((h.dims[0], h.dims[1], h.dims[2]), data.into_iter().map(f64::from).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    let rf = RfDataset { samples, t0: h.param("t0")?, scene: scene_of(&h)? };
    rf.validate()?;
    Ok(rf)
}

pub fn stack_payload(stack: &BeamformedStack) -> Vec<f32> {
    stack.images.iter().flat_map(|c| [c.re as f32, c.im as f32]).collect()
}

pub fn write_stack(path: &Path, stack: &BeamformedStack, provenance: &str) -> Result<()> {
    let s = stack.images.shape();
    let mut h = SidecarHeader::new(DataKind::Cimg, vec![s[0], s[1], s[2], 2]).with_provenance(provenance);
    h.grid = Some(stack.grid);
    h.scene = Some(stack.scene.clone());
    write_dataset(path, &stack_payload(stack), &h)
}

pub fn read_stack(path: &Path) -> Result<BeamformedStack> {
    let (data, h) = read_dataset(path)?;
    h.expect_kind(DataKind::Cimg)?;
    h.expect_rank(4)?;
    if h.dims[3] != 2 {
        return Err(Error::Format("complex stack needs a trailing dim of 2".into()));
    }
    let values: Vec<Complex64> = data.chunks_exact(2).map(|c| Complex64::new(c[0].into(), c[1].into())).collect();
    let images =
        Array3::from_shape_vec((h.dims[0], h.dims[1], h.dims[2]), values).map_err(|e| Error::Format(e.to_string()))?;
    let stack = BeamformedStack { images, grid: grid_of(&h)?, scene: scene_of(&h)? };
    stack.validate()?;
    Ok(stack)
}

/// Payload of a masked image: `f32` values with NaN at invalid pixels.
pub fn image_payload<T: Raster>(img: &T) -> Vec<f32> {
    img.values()
        .iter()
        .zip(img.valid().iter())
        .map(|(v, ok)| if *ok { *v as f32 } else { f32::NAN })
        .collect()
}

/// Sidecar for an `img` file; `params` carries `z_s`, `m`, provenance kind, ...
pub fn image_header<T: Raster>(img: &T, params: Value, provenance: &str) -> SidecarHeader {
    let g = img.grid();
    let mut h = SidecarHeader::new(DataKind::Img, vec![g.nx, g.nz]).with_provenance(provenance);
    h.grid = Some(*g);
    if let Value::Object(m) = params {
        h.params = m;
    }
    h
}

pub fn write_image<T: Raster>(path: &Path, img: &T, params: Value, provenance: &str) -> Result<()> {
    write_dataset(path, &image_payload(img), &image_header(img, params, provenance))
}

/// An `img` file: the image plus its sidecar (for `z_s`, `m`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFile {
    pub image: ScalarImage,
    pub header: SidecarHeader,
}

pub fn read_image(path: &Path) -> Result<ImageFile> {
    let (data, h) = read_dataset(path)?;
    h.expect_kind(DataKind::Img)?;
    h.expect_rank(2)?;
    let grid = grid_of(&h)?;
    if (grid.nx, grid.nz) != (h.dims[0], h.dims[1]) {
        return Err(Error::Format(format!("dims {:?} disagree with the grid", h.dims)));
    }
    let values = Array2::from_shape_vec((h.dims[0], h.dims[1]), data.iter().map(|v| if v.is_nan() { 0.0 } else { f64::from(*v) }).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    let valid = Array2::from_shape_vec((h.dims[0], h.dims[1]), data.iter().map(|v| !v.is_nan()).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(ImageFile { image: ScalarImage { grid, values, valid }, header: h })
}

pub fn focusmap_header(map: &FocusMap, provenance: &str) -> SidecarHeader {
    let mut h = SidecarHeader::new(DataKind::Focusmap, vec![map.rows.nrows(), map.rows.ncols()]).with_provenance(provenance);
    h.set("zs_list", &map.zs_list);
    h.set("x0", map.x0);
    h.set("dx", map.dx);
    h.set("m", map.m);
    h
}

pub fn focusmap_payload(map: &FocusMap) -> Vec<f32> {
    map.rows.iter().map(|v| *v as f32).collect()
}

pub fn write_focusmap(path: &Path, map: &FocusMap, provenance: &str) -> Result<()> {
    write_dataset(path, &focusmap_payload(map), &focusmap_header(map, provenance))
}

pub fn read_focusmap(path: &Path) -> Result<FocusMap> {
    let (data, h) = read_dataset(path)?;
    h.expect_kind(DataKind::Focusmap)?;
    h.expect_rank(2)?;
    let rows = Array2::from_shape_vec((h.dims[0], h.dims[1]), data.into_iter().map(f64::from).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    let zs_list: Vec<f64> = h.param("zs_list")?;
    if zs_list.len() != rows.nrows() {
        return Err(Error::Format("zs_list length disagrees with dims".into()));
    }
    Ok(FocusMap { rows, zs_list, x0: h.param("x0")?, dx: h.param("dx")?, m: h.param("m")? })
}

/// C-mode images are stored as `img` files without a grid: dims `[ny, nx]`,
/// with `ys`, `x0`, `dx`, `z_s` in the parameters.
pub fn write_cmode(path: &Path, img: &CModeImage, x0: f64, dx: f64, provenance: &str) -> Result<()> {
    let mut h = SidecarHeader::new(DataKind::Img, vec![img.values.nrows(), img.values.ncols()]).with_provenance(provenance);
    h.set("layout", "cmode");
    h.set("ys", &img.ys);
    h.set("x0", x0);
    h.set("dx", dx);
    h.set("z_s", img.z_s);
    let payload: Vec<f32> = img.values.iter().map(|v| *v as f32).collect();
    write_dataset(path, &payload, &h)
}

/// Any 2D file as `(rows, cols, values)` in storage order; used by exports.
pub fn read_plane(path: &Path) -> Result<(SidecarHeader, Array2<f64>)> {
    let (data, h) = read_dataset(path)?;
    if h.dims.len() != 2 {
        return Err(Error::Format(format!("expected a 2D file, found dims {:?}", h.dims)));
    }
    let a = Array2::from_shape_vec((h.dims[0], h.dims[1]), data.into_iter().map(f64::from).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((h, a))
}

/// Profile files (`.prof`) are the JSON form of an [`AberratorProfile`].
pub fn write_profile(path: &Path, profile: &AberratorProfile) -> Result<()> {
    profile.validate()?;
    let text = serde_json::to_vec_pretty(profile).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &text)
}

pub fn read_profile(path: &Path) -> Result<AberratorProfile> {
    let text = fs::read(path)?;
    let p: AberratorProfile =
        serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

/// Standard parameter block recorded with DPC images.
pub fn dpc_params(z_s: f64, m: usize, filter_sigma: f64, enhance_p: u32, reference: bool, kind: &str) -> Value {
    json!({
        "z_s": z_s,
        "m": m,
        "filter_sigma": filter_sigma,
        "enhance_p": enhance_p,
        "ref_correct": reference,
        "provenance_kind": kind,
    })
}
