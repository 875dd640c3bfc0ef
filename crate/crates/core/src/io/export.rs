//! 8-bit PGM and CSV exports of 2D files.

use std::path::Path;

use ndarray::Array2;

use super::{write_atomic, DataKind, SidecarHeader};
use crate::beamform::BMODE_FLOOR_DB;
use crate::error::{Error, Result};

/// Percentile of `|v|` used as the symmetric clip level.
pub const CLIP_PERCENTILE: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrayMap {
    /// 0 -> mid-gray, +-clip -> white/black.
    Signed,
    /// `[floor, 0]` dB -> black..white.
    Decibel,
}

/// A 2D file arranged for display: `rows[[r, c]]` with `c` lateral and the
/// row axis being depth (images), shear depth (focus maps) or elevation (C-mode).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayPlane {
    pub rows: Array2<f64>,
    pub row_coords: Vec<f64>,
    pub col_coords: Vec<f64>,
}

impl DisplayPlane {
    pub fn from_file(header: &SidecarHeader, data: Array2<f64>) -> Result<Self> {
        match (header.kind, header.grid) {
            (DataKind::Img, Some(g)) => Ok(Self {
                rows: data.t().to_owned(),
                row_coords: (0..g.nz).map(|i| g.z(i)).collect(),
                col_coords: (0..g.nx).map(|i| g.x(i)).collect(),
            }),
            (DataKind::Img, None) | (DataKind::Focusmap, _) => {
                let key = if header.kind == DataKind::Focusmap { "zs_list" } else { "ys" };
                let row_coords: Vec<f64> = header.param(key)?;
                let (x0, dx): (f64, f64) = (header.param("x0")?, header.param("dx")?);
                Ok(Self {
                    col_coords: (0..data.ncols()).map(|i| x0 + i as f64 * dx).collect(),
                    rows: data,
                    row_coords,
                })
            }
            (k, _) => Err(Error::Format(format!("cannot export a `{}` file as an image", k.as_str()))),
        }
    }
}

/// Nearest-rank percentile of `|v|` over the finite values.
pub fn abs_percentile(values: impl Iterator<Item = f64>, pct: f64) -> f64 {
    let mut a: Vec<f64> = values.filter(|v| v.is_finite()).map(f64::abs).collect();
    if a.is_empty() {
        return 0.0;
    }
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rank = ((pct / 100.0) * a.len() as f64).ceil().max(1.0) as usize;
    a[rank.min(a.len()) - 1]
}

pub fn gray_levels(rows: &Array2<f64>, map: GrayMap) -> Vec<u8> {
    match map {
        GrayMap::Signed => {
            let clip = abs_percentile(rows.iter().copied(), CLIP_PERCENTILE);
            rows.iter()
                .map(|v| {
                    if !v.is_finite() || clip == 0.0 {
                        return 128;
                    }
                    let t = (v / clip).clamp(-1.0, 1.0);
                    (127.5 + 127.5 * t).round() as u8
                })
                .collect()
        }
        GrayMap::Decibel => rows
            .iter()
            .map(|v| {
                if !v.is_finite() {
                    return 0;
                }
                let t = ((v - BMODE_FLOOR_DB) / -BMODE_FLOOR_DB).clamp(0.0, 1.0);
                (255.0 * t).round() as u8
            })
            .collect(),
    }
}

pub fn encode_pgm(plane: &DisplayPlane, map: GrayMap) -> Vec<u8> {
    let (h, w) = plane.rows.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(gray_levels(&plane.rows, map));
    out
}

pub fn write_pgm(path: &Path, plane: &DisplayPlane, map: GrayMap) -> Result<()> {
    write_atomic(path, &encode_pgm(plane, map))
}

/// One line per display row: the row coordinate then the values; the header
/// line lists the lateral coordinates.
pub fn encode_csv(plane: &DisplayPlane) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["coord_m".to_string()];
    head.extend(plane.col_coords.iter().map(|x| format!("{x:e}")));
    w.write_record(&head).map_err(|e| Error::Format(e.to_string()))?;
    for (r, row) in plane.rows.outer_iter().enumerate() {
        let mut rec = vec![format!("{:e}", plane.row_coords.get(r).copied().unwrap_or(f64::NAN))];
        rec.extend(row.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn write_csv(path: &Path, plane: &DisplayPlane) -> Result<()> {
    write_atomic(path, &encode_csv(plane)?)
}
