//! Argument value parsers.

use std::path::PathBuf;

use dpc_core::Roi;

/// A length in meters; `mm`, `um` and `m` suffixes are accepted.
pub fn parse_length(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, exp) = if let Some(n) = t.strip_suffix("mm") {
        (n, 3)
    } else if let Some(n) = t.strip_suffix("um") {
        (n, 6)
    } else if let Some(n) = t.strip_suffix('m') {
        (n, 0)
    } else {
        (t, 0)
    };
    let num = num.trim();
    let bad = || format!("bad length `{s}`");
    // Shift the decimal exponent in text so `9mm` parses to the same double as `9e-3`.
    let v: f64 = if exp == 0 || num.contains(['e', 'E']) {
        num.parse::<f64>().map_err(|_| bad())? / 10f64.powi(exp)
    } else {
        format!("{num}e-{exp}").parse().map_err(|_| bad())?
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

pub fn parse_roi(s: &str) -> Result<Roi, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x0, x1, z0, z1] = parts.as_slice() else {
        return Err(format!("ROI `{s}` must be x_min,x_max,z_min,z_max"));
    };
    let (x0, x1, z0, z1) = (parse_length(x0)?, parse_length(x1)?, parse_length(z0)?, parse_length(z1)?);
    if x0 >= x1 || z0 >= z1 {
        return Err(format!("ROI `{s}` is empty"));
    }
    Ok(Roi::new(x0, x1, z0, z1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub y: f64,
    pub path: PathBuf,
}

/// `y=path`
pub fn parse_slice(s: &str) -> Result<Slice, String> {
    let (y, path) = s.split_once('=').ok_or_else(|| format!("slice `{s}` must be y=path"))?;
    if path.is_empty() {
        return Err(format!("slice `{s}` has no path"));
    }
    Ok(Slice { y: parse_length(y)?, path: PathBuf::from(path) })
}
