use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::ImageGrid;
use crate::error::{Error, Result};

/// Real-valued image on a grid, indexed `[ix][iz]`, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub grid: ImageGrid,
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
}

impl ScalarImage {
    pub fn new(grid: ImageGrid, values: Array2<f64>) -> Result<Self> {
        check_shape(&grid, &values)?;
        let valid = Array2::from_elem(values.raw_dim(), true);
        Ok(Self { grid, values, valid })
    }

    pub fn zeros(grid: ImageGrid) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.nx, grid.nz)),
            valid: Array2::from_elem((grid.nx, grid.nz), true),
        }
    }
}

pub(crate) fn check_shape(grid: &ImageGrid, values: &Array2<f64>) -> Result<()> {
    if values.dim() != (grid.nx, grid.nz) {
        return Err(Error::Mismatch(format!(
            "image shape {:?} does not match grid {}x{}",
            values.dim(),
            grid.nx,
            grid.nz
        )));
    }
    Ok(())
}

/// Rectangle in the x-z plane used for region-of-interest statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Roi {
    pub fn new(x_min: f64, x_max: f64, z_min: f64, z_max: f64) -> Self {
        Self { x_min, x_max, z_min, z_max }
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }

    /// Grid pixels inside the rectangle that are also valid in `mask`.
    pub fn pixels<'a>(&'a self, grid: &'a ImageGrid, mask: &'a Array2<bool>) -> impl Iterator<Item = (usize, usize)> + 'a {
        (0..grid.nx).flat_map(move |ix| {
            (0..grid.nz).filter_map(move |iz| {
                (self.contains(grid.x(ix), grid.z(iz)) && mask[[ix, iz]]).then_some((ix, iz))
            })
        })
    }
}
