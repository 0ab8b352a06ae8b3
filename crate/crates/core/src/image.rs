//! Reconstruction grid and image container.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square-in-extent pixel grid over `[-R, R]²` centred on the iso-center.
///
/// Row 0 is the top. Physical x grows with the column index and physical y
/// shrinks with the row index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    pub m: usize,
    pub n: usize,
    /// Half of the side length, normally the FOV radius (mm).
    pub half_extent: f64,
}

impl ImageGrid {
    pub fn new(m: usize, n: usize, half_extent: f64) -> Result<Self> {
        if m == 0 || n == 0 || !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid grid {m}x{n} over half extent {half_extent}"
            )));
        }
        Ok(ImageGrid { m, n, half_extent })
    }

    pub fn square(size: usize, half_extent: f64) -> Result<Self> {
        ImageGrid::new(size, size, half_extent)
    }

    /// Pixel size used by the offset inversion, `2R/M`.
    pub fn dx(&self) -> f64 {
        2.0 * self.half_extent / self.m as f64
    }

    /// Pixel size used by the offset inversion, `2R/N`.
    pub fn dy(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    fn col_pitch(&self) -> f64 {
        2.0 * self.half_extent / self.n as f64
    }

    fn row_pitch(&self) -> f64 {
        2.0 * self.half_extent / self.m as f64
    }

    pub fn x_of_col(&self, c: usize) -> f64 {
        -self.half_extent + (c as f64 + 0.5) * self.col_pitch()
    }

    pub fn y_of_row(&self, r: usize) -> f64 {
        self.half_extent - (r as f64 + 0.5) * self.row_pitch()
    }

    /// Fractional column of physical x.
    pub fn col_of_x(&self, x: f64) -> f64 {
        (x + self.half_extent) / self.col_pitch() - 0.5
    }

    /// Fractional row of physical y.
    pub fn row_of_y(&self, y: f64) -> f64 {
        (self.half_extent - y) / self.row_pitch() - 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentImage {
    pub grid: ImageGrid,
    pub values: Array2<f64>,
    /// 1-based segment index, if the image belongs to one segment.
    pub segment: Option<usize>,
    pub theta: f64,
}

impl SegmentImage {
    pub fn zeros(grid: ImageGrid) -> Self {
        SegmentImage {
            grid,
            values: Array2::zeros((grid.m, grid.n)),
            segment: None,
            theta: 0.0,
        }
    }

    pub fn from_values(grid: ImageGrid, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.m, grid.n) {
            return Err(Error::DimensionMismatch(format!(
                "values {:?} vs grid {}x{}",
                values.dim(),
                grid.m,
                grid.n
            )));
        }
        Ok(SegmentImage {
            grid,
            values,
            segment: None,
            theta: 0.0,
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Bilinear sample at fractional (row, col); `None` outside the pixel
    /// centre lattice.
    pub fn sample_index(&self, r: f64, c: f64) -> Option<f64> {
        let (m, n) = self.dim();
        let eps = 1e-9;
        if !(r >= -eps && c >= -eps && r <= (m - 1) as f64 + eps && c <= (n - 1) as f64 + eps) {
            return None;
        }
        let r = r.clamp(0.0, (m - 1) as f64);
        let c = c.clamp(0.0, (n - 1) as f64);
        let r0 = (r.floor() as usize).min(m.saturating_sub(2));
        let c0 = (c.floor() as usize).min(n.saturating_sub(2));
        let fr = r - r0 as f64;
        let fc = c - c0 as f64;
        let v = &self.values;
        let at = |i: usize, j: usize| v[[i.min(m - 1), j.min(n - 1)]];
        Some(
            (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1))
                + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1)),
        )
    }

    /// Bilinear sample at physical (x, y).
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        self.sample_index(self.grid.row_of_y(y), self.grid.col_of_x(x))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn check_same_dims(&self, other: &SegmentImage) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}
