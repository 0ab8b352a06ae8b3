//! Analytic ellipse phantoms with closed-form line integrals.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::image::{ImageGrid, SegmentImage};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Vec2,
    /// Semi-axes along the ellipse's own x and y before tilting (mm).
    pub semi_axes: [f64; 2],
    /// Counter-clockwise tilt (rad).
    pub tilt: f64,
    /// Attenuation added inside the ellipse (1/mm).
    pub density: f64,
}

impl Ellipse {
    pub fn new(center: Vec2, semi_axes: [f64; 2], tilt: f64, density: f64) -> Result<Self> {
        if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "semi-axes must be positive: {semi_axes:?}"
            )));
        }
        if ![center.x, center.y, tilt, density].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite ellipse parameter".into()));
        }
        Ok(Ellipse {
            center,
            semi_axes,
            tilt,
            density,
        })
    }

    fn to_unit(self, p: Vec2) -> Vec2 {
        let q = (p - self.center).rotated(-self.tilt);
        Vec2::new(q.x / self.semi_axes[0], q.y / self.semi_axes[1])
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let q = self.to_unit(p);
        q.dot(q) <= 1.0
    }

    /// Length of the chord the line cuts through this ellipse.
    pub fn chord(&self, ray: &Pose) -> f64 {
        let p = self.to_unit(ray.point);
        let dr = ray.direction.rotated(-self.tilt);
        let d = Vec2::new(dr.x / self.semi_axes[0], dr.y / self.semi_axes[1]);
        let a = d.dot(d);
        let b = p.dot(d);
        let c = p.dot(p) - 1.0;
        let disc = b * b - a * c;
        if disc <= 0.0 {
            0.0
        } else {
            2.0 * disc.sqrt() / a
        }
    }

    fn bounding_radius(&self) -> f64 {
        self.center.norm() + self.semi_axes[0].max(self.semi_axes[1])
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EllipsePhantom {
    pub ellipses: Vec<Ellipse>,
}

/// Table rows: centre x, centre y, semi-axis a, semi-axis b, tilt (deg), density.
type Row = [f64; 6];

const SHEPP_LOGAN: [Row; 10] = [
    [0.0, 0.0, 0.69, 0.92, 0.0, 2.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.98],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.02],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.02],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.01],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.01],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.01],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.01],
    [0.0, -0.606, 0.023, 0.023, 0.0, 0.01],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.01],
];

const MODIFIED_SHEPP_LOGAN_DENSITIES: [f64; 10] = [1.0, -0.8, -0.2, -0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];

// Head-like slice: bone shell, brain, and a spread of small inserts with
// edges in many orientations.
const FORBILD_HEAD: [Row; 10] = [
    [0.0, 0.0, 0.92, 0.96, 0.0, 1.8],
    [0.0, 0.0, 0.86, 0.90, 0.0, -0.75],
    [-0.30, 0.35, 0.12, 0.20, 15.0, 0.25],
    [0.30, 0.35, 0.12, 0.20, -15.0, 0.25],
    [0.0, -0.25, 0.25, 0.10, 0.0, -0.5],
    [0.0, 0.55, 0.06, 0.06, 0.0, 0.8],
    [-0.45, -0.40, 0.05, 0.05, 0.0, 0.6],
    [0.45, -0.40, 0.05, 0.05, 0.0, 0.6],
    [0.0, -0.65, 0.15, 0.04, 0.0, 0.4],
    [0.2, 0.0, 0.04, 0.12, 30.0, -0.3],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SheppLogan,
    ModifiedSheppLogan,
    ForbildHead,
    Disk,
}

impl EllipsePhantom {
    pub fn new(ellipses: Vec<Ellipse>) -> Self {
        EllipsePhantom { ellipses }
    }

    fn from_rows(rows: &[Row]) -> Self {
        let ellipses = rows
            .iter()
            .map(|r| Ellipse {
                center: Vec2::new(r[0], r[1]),
                semi_axes: [r[2], r[3]],
                tilt: r[4].to_radians(),
                density: r[5],
            })
            .collect();
        EllipsePhantom { ellipses }
    }

    /// Preset on the unit disk; scale with [`EllipsePhantom::scaled`].
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::SheppLogan => Self::from_rows(&SHEPP_LOGAN),
            Preset::ModifiedSheppLogan => {
                let mut ph = Self::from_rows(&SHEPP_LOGAN);
                for (e, d) in ph.ellipses.iter_mut().zip(MODIFIED_SHEPP_LOGAN_DENSITIES) {
                    e.density = d;
                }
                ph
            }
            Preset::ForbildHead => Self::from_rows(&FORBILD_HEAD),
            Preset::Disk => Self::from_rows(&[[0.0, 0.0, 1.0, 1.0, 0.0, 1.0]]),
        }
    }

    /// Geometric scaling about the origin.
    pub fn scaled(&self, k: f64) -> Self {
        let ellipses = self
            .ellipses
            .iter()
            .map(|e| Ellipse {
                center: e.center * k,
                semi_axes: [e.semi_axes[0] * k, e.semi_axes[1] * k],
                ..*e
            })
            .collect();
        EllipsePhantom { ellipses }
    }

    pub fn with_density_scale(&self, k: f64) -> Self {
        let ellipses = self
            .ellipses
            .iter()
            .map(|e| Ellipse {
                density: e.density * k,
                ..*e
            })
            .collect();
        EllipsePhantom { ellipses }
    }

    /// Counter-clockwise rotation about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let ellipses = self
            .ellipses
            .iter()
            .map(|e| Ellipse {
                center: e.center.rotated(angle),
                tilt: e.tilt + angle,
                ..*e
            })
            .collect();
        EllipsePhantom { ellipses }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.ellipses.iter().map(Ellipse::bounding_radius).fold(0.0, f64::max)
    }

    /// Logs a warning if the support reaches past `r1`.
    pub fn check_support(&self, r1: f64) {
        let r = self.bounding_radius();
        if r > r1 {
            warn!("phantom support radius {r:.3} mm exceeds FOV radius {r1:.3} mm; projections will be truncated");
        }
    }

    pub fn density_at(&self, p: Vec2) -> f64 {
        self.ellipses.iter().filter(|e| e.contains(p)).map(|e| e.density).sum()
    }

    /// Parses one ellipse per line: `cx cy a b tilt_deg density`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ellipses = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::Config(format!("phantom line {}: {e}", no + 1)))?;
            if vals.len() != 6 {
                return Err(Error::Config(format!(
                    "phantom line {}: expected 6 numbers, found {}",
                    no + 1,
                    vals.len()
                )));
            }
            ellipses.push(Ellipse::new(
                Vec2::new(vals[0], vals[1]),
                [vals[2], vals[3]],
                vals[4].to_radians(),
                vals[5],
            )?);
        }
        Ok(EllipsePhantom { ellipses })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# cx cy a b tilt_deg density\n");
        for e in &self.ellipses {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.center.x,
                e.center.y,
                e.semi_axes[0],
                e.semi_axes[1],
                e.tilt.to_degrees(),
                e.density
            ));
        }
        out
    }
}

/// Integral of the phantom along the full line.
pub fn line_integral(phantom: &EllipsePhantom, ray: &Pose) -> f64 {
    phantom
        .ellipses
        .iter()
        .map(|e| {
            let c = e.chord(ray);
            if c > 0.0 {
                e.density * c
            } else {
                0.0
            }
        })
        .sum()
}

/// Point-sampled phantom at pixel centres.
pub fn rasterize(phantom: &EllipsePhantom, grid: &ImageGrid) -> SegmentImage {
    let mut img = SegmentImage::zeros(*grid);
    for ((r, c), v) in img.values.indexed_iter_mut() {
        *v = phantom.density_at(Vec2::new(grid.x_of_col(c), grid.y_of_row(r)));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn horizontal(y: f64) -> Pose {
        Pose::new(Vec2::new(-5.0, y), Vec2::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn disk_chords() {
        let disk = EllipsePhantom::preset(Preset::Disk);
        assert_abs_diff_eq!(line_integral(&disk, &horizontal(0.0)), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(line_integral(&disk, &horizontal(0.6)), 1.6, epsilon = 1e-12);
        assert_eq!(line_integral(&disk, &horizontal(1.2)), 0.0);
    }

    fn quadrature(ph: &EllipsePhantom, ray: &Pose, half_len: f64, step: f64) -> f64 {
        let n = (2.0 * half_len / step) as usize;
        (0..n)
            .map(|k| {
                let t = -half_len + (k as f64 + 0.5) * step;
                ph.density_at(ray.point + ray.direction * t)
            })
            .sum::<f64>()
            * step
    }

    #[test]
    fn matches_quadrature() {
        let ph = EllipsePhantom::preset(Preset::ForbildHead);
        for (p, d) in [
            (Vec2::new(0.1, -0.2), Vec2::new(0.3, 1.0)),
            (Vec2::new(-0.33, 0.4), Vec2::new(1.0, -0.2)),
            (Vec2::new(0.0, 0.0), Vec2::new(0.7, 0.7)),
        ] {
            let ray = Pose::new(p, d).unwrap();
            let exact = line_integral(&ph, &ray);
            let approx = quadrature(&ph, &ray, 1.5, 1e-6);
            assert!((exact - approx).abs() < 1e-4, "{exact} vs {approx}");
        }
    }

    #[test]
    fn rasterize_examples() {
        let grid = ImageGrid::square(512, 1.1).unwrap();
        let empty = rasterize(&EllipsePhantom::default(), &grid);
        assert!(empty.values.iter().all(|&v| v == 0.0));

        let disk = EllipsePhantom::preset(Preset::Disk).with_density_scale(3.0);
        let img = rasterize(&disk, &grid);
        assert_eq!(img.values[[256, 256]], 3.0);
        let count = img.values.iter().filter(|&&v| v > 0.0).count() as f64;
        let want = std::f64::consts::PI / (grid.dx() * grid.dy());
        assert!((count - want).abs() / want < 0.01);

        let two = EllipsePhantom::parse("0 0 0.5 0.5 0 1\n0.2 0 0.5 0.3 0 2\n").unwrap();
        let img = rasterize(&two, &grid);
        let (r, c) = (grid.row_of_y(0.0).round() as usize, grid.col_of_x(0.1).round() as usize);
        assert_eq!(img.values[[r, c]], 3.0);
    }

    #[test]
    fn parse_round_trip() {
        let ph = EllipsePhantom::preset(Preset::SheppLogan);
        let back = EllipsePhantom::parse(&ph.to_text()).unwrap();
        assert_eq!(back.ellipses.len(), 10);
        for (a, b) in ph.ellipses.iter().zip(&back.ellipses) {
            assert_abs_diff_eq!(a.tilt, b.tilt, epsilon = 1e-12);
            assert_eq!(a.density, b.density);
        }
        assert!(EllipsePhantom::parse("1 2 3\n").is_err());
        assert!(EllipsePhantom::parse("0 0 -1 1 0 1\n").is_err());
    }

    proptest! {
        #[test]
        fn reparameterization_invariant(
            px in -1.0..1.0f64, py in -1.0..1.0f64, ang in 0.0..6.3f64, shift in -3.0..3.0f64
        ) {
            let ph = EllipsePhantom::preset(Preset::ModifiedSheppLogan);
            let d = Vec2::new(ang.cos(), ang.sin());
            let a = Pose::new(Vec2::new(px, py), d).unwrap();
            let b = Pose::new(Vec2::new(px, py) + d * shift, -d).unwrap();
            prop_assert!((line_integral(&ph, &a) - line_integral(&ph, &b)).abs() < 1e-9);
        }

        #[test]
        fn rotation_equivariant(
            px in -1.0..1.0f64, py in -1.0..1.0f64, ang in 0.0..6.3f64, rot in -3.2..3.2f64
        ) {
            let ph = EllipsePhantom::preset(Preset::ForbildHead);
            let ray = Pose::new(Vec2::new(px, py), Vec2::new(ang.cos(), ang.sin())).unwrap();
            let rray = Pose::new(ray.point.rotated(rot), ray.direction.rotated(rot)).unwrap();
            let a = line_integral(&ph, &ray);
            let b = line_integral(&ph.rotated(rot), &rray);
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
