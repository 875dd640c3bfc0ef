//! Region-of-interest statistics shared by the comparison report and the
//! acceptance checks.

use ndarray::Array2;

use crate::domain::ImageGrid;
use crate::error::{Error, Result};
use crate::image::Roi;

/// Values of pixels inside `roi` and valid in `mask`, in `[ix][iz]` order.
pub fn roi_values(values: &Array2<f64>, mask: &Array2<bool>, grid: &ImageGrid, roi: &Roi) -> Vec<f64> {
    roi.pixels(grid, mask).map(|(ix, iz)| values[[ix, iz]]).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn mean_abs(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Mismatch(format!("sample counts differ: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of pairs with equal sign, ignoring pairs where either value is 0.
pub fn sign_agreement(a: &[f64], b: &[f64]) -> f64 {
    let (mut agree, mut total) = (0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        if *x == 0.0 || *y == 0.0 {
            continue;
        }
        total += 1;
        if (*x > 0.0) == (*y > 0.0) {
            agree += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        agree as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_basics() {
        let a = [1.0, 2.0, 3.0, 5.0];
        let b = [2.0, 4.0, 6.0, 10.0];
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson(&a, &[1.0; 4]), Err(Error::ZeroVariance)));
        assert!(pearson(&a, &b[..3]).is_err());
    }

    #[test]
    fn sign_agreement_skips_zeros() {
        assert_eq!(sign_agreement(&[1.0, -1.0, 0.0], &[2.0, 3.0, 1.0]), 0.5);
        assert_eq!(sign_agreement(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 3.0]), 2.0);
        assert_eq!(mean_abs(&[-1.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
        assert!(mean(&[]).is_nan());
    }
}
