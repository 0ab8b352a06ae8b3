//! Per-segment filtered backprojection for a linearly translating source and
//! assembly of the full symmetric scan.
//!
//! A segment's rays are regrouped into parallel families by their
//! detector-minus-source offset, each family is ramp filtered along the
//! source position and backprojected. The ramp is applied either as a
//! derivative followed by a Hilbert transform or as a Ram-Lak kernel.
//! Filtering along the detector at fixed source position is not used: the
//! ray-to-point distance then scales non-uniformly across the kernel, which
//! biases the result badly for a linear trajectory.
//!
//! The redundancy weights `w_i` split every line among all segments that
//! measure it (in either direction) and sum to one, so `Σ_i f_i` is the
//! full image.

pub mod rct;

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::RowConvolver;
use crate::geometry::ScanGeometry;
use crate::image::{ImageGrid, SegmentImage};
use crate::projector::Sinogram;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Derivative followed by the discrete Hilbert transform.
    #[default]
    Hilbert,
    /// Ram-Lak ramp.
    Ramp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Derivative {
    #[default]
    CentralDifference,
    /// Forward difference paired with a half-sample Hilbert kernel.
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RedundancyWeight {
    /// Raised-cosine flanks near the trajectory and detector ends.
    #[default]
    SmoothTrapezoid,
    /// Equal share among the segments that measure a line.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub kernel: Kernel,
    pub derivative: Derivative,
    pub redundancy_weight: RedundancyWeight,
    /// Width of the smooth flanks as a fraction of `s` and `d`.
    pub taper: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kernel: Kernel::Hilbert,
            derivative: Derivative::CentralDifference,
            redundancy_weight: RedundancyWeight::SmoothTrapezoid,
            taper: 0.15,
        }
    }
}

impl FilterSpec {
    fn validate(&self) -> Result<()> {
        if !(self.taper > 0.0 && self.taper <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "taper must be in (0, 1], got {}",
                self.taper
            )));
        }
        Ok(())
    }
}

/// Discrete Hilbert kernel `2/(πn)` for odd `n`, zero otherwise.
pub fn hilbert_kernel(n: isize) -> f64 {
    if n % 2 != 0 {
        2.0 / (PI * n as f64)
    } else {
        0.0
    }
}

/// Ramp-filter taps for offsets `-(len-1)..=(len-1)`, scaled so that the
/// convolution approximates `∫ g(u') k(u - u') du'` on a grid of pitch `du`.
pub fn filter_taps(spec: &FilterSpec, du: f64, len: usize) -> Vec<f64> {
    let half = len as isize - 1;
    (-half..=half)
        .map(|n| {
            let nf = n as f64;
            match (spec.kernel, spec.derivative) {
                (Kernel::Ramp, _) => {
                    if n == 0 {
                        1.0 / (4.0 * du)
                    } else if n % 2 != 0 {
                        -1.0 / (PI * PI * nf * nf * du)
                    } else {
                        0.0
                    }
                }
                // (1/2π)·H·∂ with a central difference collapses to this kernel.
                (Kernel::Hilbert, Derivative::CentralDifference) => {
                    (hilbert_kernel(n + 1) - hilbert_kernel(n - 1)) / (4.0 * PI * du)
                }
                // Forward difference at half samples, Hilbert back onto the grid.
                (Kernel::Hilbert, Derivative::Forward) => -2.0 / (PI * PI * du * (4.0 * nf * nf - 1.0)),
            }
        })
        .collect()
}

fn smooth_step(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z >= 1.0 {
        1.0
    } else {
        0.5 * (1.0 - (PI * z).cos())
    }
}

struct WeightShape {
    s: f64,
    d_eff: f64,
    tau_s: f64,
    tau_d: f64,
    mode: RedundancyWeight,
}

impl WeightShape {
    fn new(geom: &ScanGeometry, spec: &FilterSpec) -> Self {
        let d_eff = geom.d() - geom.du() / 2.0;
        WeightShape {
            s: geom.s(),
            d_eff,
            tau_s: spec.taper * geom.s(),
            tau_d: spec.taper * d_eff,
            mode: spec.redundancy_weight,
        }
    }

    fn raw(&self, lambda: f64, u: f64) -> f64 {
        let ms = self.s - lambda.abs();
        let md = self.d_eff - u.abs();
        let tol = 1e-9;
        match self.mode {
            RedundancyWeight::Uniform => {
                if ms >= -tol && md >= -tol {
                    1.0
                } else {
                    0.0
                }
            }
            RedundancyWeight::SmoothTrapezoid => smooth_step(ms / self.tau_s) * smooth_step(md / self.tau_d),
        }
    }
}

/// Share of every sample of segment `segment` among all segments that
/// measure the same line, `[n_views × n_det]`.
pub fn redundancy_weights(geom: &ScanGeometry, segment: usize, spec: &FilterSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let theta = geom.segment_angle(segment)?;
    let t = geom.t_segments();
    let rot: Vec<(f64, f64)> = (1..=t)
        .map(|m| {
            let a = geom.segment_angle(m).expect("segment in range");
            (a.sin(), a.cos())
        })
        .collect();
    let shape = WeightShape::new(geom, spec);
    let (l, h, shift) = (geom.l(), geom.h(), geom.lambda_shift());
    let lambdas = geom.lambda_samples();
    let mut w = Array2::zeros((geom.n_views(), geom.n_det()));
    w.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(lambdas.par_iter())
        .for_each(|(mut row, &lam)| {
            let src = Vec2::new(lam + shift, -l).rotated(theta);
            for (j, wj) in row.iter_mut().enumerate() {
                let det = Vec2::new(geom.bin_u(j), h).rotated(theta);
                let mut own = 0.0;
                let mut total = 0.0;
                for (m, &(sm, cm)) in rot.iter().enumerate() {
                    // Into frame m: rotate by -theta_m.
                    let to_m = |p: Vec2| Vec2::new(cm * p.x + sm * p.y, -sm * p.x + cm * p.y);
                    let (a, b) = (to_m(src), to_m(det));
                    let dy = b.y - a.y;
                    if dy.abs() < 1e-12 {
                        continue;
                    }
                    let slope = (b.x - a.x) / dy;
                    let lam_m = a.x + (-l - a.y) * slope - shift;
                    let u_m = a.x + (h - a.y) * slope;
                    let raw = shape.raw(lam_m, u_m);
                    if m + 1 == segment {
                        own = raw;
                    }
                    total += raw;
                }
                *wj = if total > 0.0 { own / total } else { 0.0 };
            }
        });
    Ok(w)
}

/// Rays of one segment sorted into parallel families. Family `b` holds the
/// rays with detector-minus-source offset `a_b = a0 + b·da`, i.e. direction
/// `atan(a_b / D)`, sampled at the source positions.
struct ParallelFamilies {
    a0: f64,
    da: f64,
    /// `[families × (n_views + 1)]`, weighted and filtered along `λ`, one
    /// zero pad per family.
    q: Vec<f64>,
    stride: usize,
    count: usize,
}

/// Offset step between families. Detector bins are grouped so that the
/// angular step stays well below what the `λ` sampling resolves at the
/// edge of `grid`.
fn family_step(g: &ScanGeometry, grid: &ImageGrid) -> usize {
    let d_total = g.l() + g.h();
    let want = g.lambda_step() * d_total / (4.0 * grid.half_extent.max(f64::MIN_POSITIVE));
    ((want / g.du()).floor() as usize).clamp(1, g.n_det())
}

fn parallel_families(sino: &Sinogram, grid: &ImageGrid, spec: &FilterSpec) -> Result<ParallelFamilies> {
    let g = &sino.geometry;
    let weights = redundancy_weights(g, sino.segment, spec)?;
    let (n_views, n_det, du) = (g.n_views(), g.n_det(), g.du());
    let shift = g.lambda_shift();
    let lam: Vec<f64> = sino.lambda_samples.iter().map(|v| v + shift).collect();
    let (u_first, u_last) = (g.bin_u(0), g.bin_u(n_det - 1));
    let group = family_step(g, grid);
    let da = group as f64 * du;
    let a_lo = u_first - lam[n_views - 1];
    let a_hi = u_last - lam[0];
    let count = ((a_hi - a_lo) / da).ceil() as usize + 1;
    let a0 = 0.5 * (a_lo + a_hi) - 0.5 * (count - 1) as f64 * da;
    let stride = n_views + 1;
    let conv = RowConvolver::new(&filter_taps(spec, g.lambda_step(), n_views), n_views);
    let weighted = &sino.values * &weights;

    let mut q = vec![0.0; count * stride];
    q.par_chunks_mut(stride).enumerate().for_each(|(b, out)| {
        let centre = a0 + b as f64 * da;
        let row: Vec<f64> = (0..n_views)
            .map(|k| {
                // Box average over the detector bins folded into this family.
                let mut acc = 0.0;
                for j in 0..group {
                    let a = centre + (j as f64 - 0.5 * (group - 1) as f64) * du;
                    let t = (a + lam[k] - u_first) / du;
                    if t < 0.0 || t > (n_det - 1) as f64 {
                        continue;
                    }
                    let i = (t as usize).min(n_det - 2);
                    let f = t - i as f64;
                    acc += weighted[[k, i]] * (1.0 - f) + weighted[[k, i + 1]] * f;
                }
                acc / group as f64
            })
            .collect();
        conv.apply(&row, &mut out[..n_views]);
    });
    Ok(ParallelFamilies {
        a0,
        da,
        q,
        stride,
        count,
    })
}

/// Reconstructs one segment on `grid` with the sinogram's nominal geometry.
/// The whole square is filled; only the disk inscribed in the grid is
/// guaranteed complete data when the grid spans the field of view.
///
/// Rays with the same detector-minus-source offset `a` are parallel, so the
/// segment is a set of parallel projections with spacing `Δλ·cosφ`. Each is
/// filtered along `λ` and backprojected with weight `da·cosφ/D`, where
/// `tanφ = a/D`; at depth `L` below the trajectory the ray of family `a`
/// through `x` leaves the source at `λ* = x - L·a/D`.
pub fn reconstruct_segment(sino: &Sinogram, grid: &ImageGrid, filt: &FilterSpec) -> Result<SegmentImage> {
    reconstruct_segment_in_frame(sino, grid, filt, 0.0)
}

/// Same as [`reconstruct_segment`] on a grid rotated by `frame`: pixel `p`
/// holds the object at `R(frame)·p`, which equals rotating the ordinary
/// image by `-frame` without resampling or fill.
pub fn reconstruct_segment_in_frame(
    sino: &Sinogram,
    grid: &ImageGrid,
    filt: &FilterSpec,
    frame: f64,
) -> Result<SegmentImage> {
    sino.check()?;
    let g = sino.geometry;
    let fam = parallel_families(sino, grid, filt)?;
    let (l, d_total) = (g.l(), g.l() + g.h());
    let (sin_t, cos_t) = (sino.theta - frame).sin_cos();
    let lam0 = sino.lambda_samples[0] + g.lambda_shift();
    let dlam = g.lambda_step();
    let max_t = (g.n_views() - 1) as f64;
    let scale: Vec<f64> = (0..fam.count)
        .map(|b| {
            let a = fam.a0 + b as f64 * fam.da;
            fam.da * d_total / (d_total * d_total + a * a).sqrt() / d_total
        })
        .collect();

    let mut img = SegmentImage::zeros(*grid);
    img.segment = Some(sino.segment);
    img.theta = sino.theta;
    img.values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            let y = grid.y_of_row(r);
            for (c, px) in row.iter_mut().enumerate() {
                let x = grid.x_of_col(c);
                let xl = cos_t * x + sin_t * y;
                let depth = -sin_t * x + cos_t * y + l;
                let ratio = depth / d_total;
                let t0 = (xl - ratio * fam.a0 - lam0) / dlam;
                let dt = -ratio * fam.da / dlam;
                let mut acc = 0.0;
                for (b, &sc) in scale.iter().enumerate() {
                    let t = t0 + b as f64 * dt;
                    if t < 0.0 || t > max_t {
                        continue;
                    }
                    let i = t as usize;
                    let f = t - i as f64;
                    let base = b * fam.stride + i;
                    acc += sc * (fam.q[base] + f * (fam.q[base + 1] - fam.q[base]));
                }
                *px = acc;
            }
        });
    Ok(img)
}

/// Sums segment images into the full image. Partial images from
/// [`reconstruct_segment`] already carry their redundancy shares, so the
/// default is a plain sum; explicit `weights` give a weighted sum.
pub fn assemble_smlct(images: &[SegmentImage], weights: Option<&[f64]>) -> Result<SegmentImage> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("no segment images to assemble".into()))?;
    for img in images {
        if img.grid != first.grid {
            return Err(Error::DimensionMismatch("segment images on different grids".into()));
        }
    }
    if images.iter().all(|i| i.segment.is_some()) {
        let mut seen: Vec<usize> = images.iter().filter_map(|i| i.segment).collect();
        seen.sort_unstable();
        let expected: Vec<usize> = (1..=images.len()).collect();
        if seen != expected {
            return Err(Error::InvalidArgument(format!(
                "segments {seen:?} do not form a complete set 1..={}",
                images.len()
            )));
        }
    }
    if let Some(w) = weights {
        if w.len() != images.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} images",
                w.len(),
                images.len()
            )));
        }
    }
    let mut out = SegmentImage::zeros(first.grid);
    for (k, img) in images.iter().enumerate() {
        let wk = weights.map_or(1.0, |w| w[k]);
        out.values.scaled_add(wk, &img.values);
    }
    Ok(out)
}

/// Reconstructs every segment and returns the partial images in order.
pub fn reconstruct_all(sinos: &[Sinogram], grid: &ImageGrid, filt: &FilterSpec) -> Result<Vec<SegmentImage>> {
    sinos.iter().map(|s| reconstruct_segment(s, grid, filt)).collect()
}
