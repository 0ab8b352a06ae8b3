//! Image comparison: RMSE, SSIM and line profiles.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SegmentImage;
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub ssim: f64,
    pub profiles: Vec<Vec<f64>>,
}

fn check(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

pub fn rmse(a: &SegmentImage, b: &SegmentImage) -> Result<f64> {
    rmse_values(&a.values, &b.values)
}

pub fn rmse_values(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    check(a, b)?;
    let sum: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

pub const DEFAULT_SSIM_WINDOW: usize = 8;

pub fn ssim(a: &SegmentImage, b: &SegmentImage, window: usize, dynamic_range: f64) -> Result<f64> {
    ssim_values(&a.values, &b.values, window, dynamic_range)
}

/// Mean SSIM over all `window × window` blocks (stride 1) with uniform
/// weights and `C1 = (0.01·range)²`, `C2 = (0.03·range)²`.
pub fn ssim_values(a: &Array2<f64>, b: &Array2<f64>, window: usize, dynamic_range: f64) -> Result<f64> {
    check(a, b)?;
    if !(dynamic_range > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dynamic range must be positive, got {dynamic_range}"
        )));
    }
    let (m, n) = a.dim();
    let w = window.min(m).min(n).max(1);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let count = (w * w) as f64;
    let mut total = 0.0;
    let mut blocks = 0usize;
    for r0 in 0..=m - w {
        for c0 in 0..=n - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + w {
                for c in c0..c0 + w {
                    let x = a[[r, c]];
                    let y = b[[r, c]];
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let ma = sa / count;
            let mb = sb / count;
            let va = (saa / count - ma * ma).max(0.0);
            let vb = (sbb / count - mb * mb).max(0.0);
            let cov = sab / count - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            blocks += 1;
        }
    }
    Ok(total / blocks as f64)
}

/// `samples` bilinear samples from `p0` to `p1` (physical mm coordinates).
pub fn profile(img: &SegmentImage, p0: Vec2, p1: Vec2, samples: usize) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("profile needs at least one sample".into()));
    }
    for p in [p0, p1] {
        if img.sample(p.x, p.y).is_none() {
            return Err(Error::InvalidArgument(format!(
                "profile endpoint ({}, {}) outside the grid",
                p.x, p.y
            )));
        }
    }
    let denom = (samples.max(2) - 1) as f64;
    Ok((0..samples)
        .map(|k| {
            let t = k as f64 / denom;
            let p = p0 + (p1 - p0) * t;
            img.sample(p.x, p.y).expect("segment lies inside the grid")
        })
        .collect())
}

/// Value range of `img`, used as the SSIM dynamic range for a reference.
pub fn dynamic_range(img: &SegmentImage) -> f64 {
    let (lo, hi) = img.min_max();
    (hi - lo).max(f64::MIN_POSITIVE)
}

pub fn compare(img: &SegmentImage, reference: &SegmentImage) -> Result<MetricReport> {
    Ok(MetricReport {
        rmse: rmse(img, reference)?,
        ssim: ssim(img, reference, DEFAULT_SSIM_WINDOW, dynamic_range(reference))?,
        profiles: Vec::new(),
    })
}
