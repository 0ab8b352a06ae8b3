//! Self-calibration from opposite segment pairs: rotate each pair into the
//! first segment's frame, register, aggregate the offsets and convert them
//! into a source-distance error and a trajectory shift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{visible_angles, ScanGeometry};
use crate::image::{ImageGrid, SegmentImage};
use crate::projector::Sinogram;
use crate::recon::rct::RctGeometry;
use crate::recon::{reconstruct_segment_in_frame, FilterSpec};
use crate::registration::{bow_tie_mask, gcc_phat_vw, peak_offset, tukey_window, BowTieMask, CcsMap, OffsetEstimate};

/// Largest deviation from the per-component median that is not an outlier.
pub const OUTLIER_PIXELS: f64 = 3.0;

/// Default border taper applied to pair images before registration.
pub const EDGE_TAPER: f64 = 0.125;

#[derive(Debug, Clone)]
pub struct Pair {
    /// 1-based index of the first segment of the pair.
    pub j: usize,
    pub f: SegmentImage,
    pub g: SegmentImage,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub t: usize,
}

/// Rotates image content counter-clockwise by `angle` about the grid centre
/// (bilinear, zero outside the support).
pub fn rotate_image(img: &SegmentImage, angle: f64) -> SegmentImage {
    if angle == 0.0 {
        return img.clone();
    }
    let grid = img.grid;
    let mut out = img.clone();
    let (s, c) = (-angle).sin_cos();
    for ((r, col), v) in out.values.indexed_iter_mut() {
        let x = grid.x_of_col(col);
        let y = grid.y_of_row(r);
        let (sx, sy) = (c * x - s * y, s * x + c * y);
        *v = img.sample(sx, sy).unwrap_or(0.0);
    }
    out
}

/// Groups segment `j` with `j + T/2` and brings both into segment 1's
/// frame by rotating them by `-theta_j`. The rotation leaves zero-filled
/// corners at the same place in both images, which pull the correlation
/// towards zero shift; [`pairs_from_sinograms`] avoids them.
pub fn pair_and_rotate(images: &[SegmentImage], geom: &ScanGeometry) -> Result<PairSet> {
    let t = geom.t_segments();
    if images.len() != t || !t.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "expected {t} segment images, got {}",
            images.len()
        )));
    }
    let pairs = (1..=t / 2)
        .into_par_iter()
        .map(|j| -> Result<Pair> {
            let theta = geom.segment_angle(j)?;
            Ok(Pair {
                j,
                f: rotate_image(&images[j - 1], -theta),
                g: rotate_image(&images[j - 1 + t / 2], -theta),
                theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairSet { pairs, t })
}

/// Builds the pairs by reconstructing every segment directly on the grid of
/// its pair's frame, so no resampling or fill is involved.
pub fn pairs_from_sinograms(sinos: &[Sinogram], grid: &ImageGrid, filt: &FilterSpec) -> Result<PairSet> {
    let geom = sinos
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sinograms".into()))?
        .geometry;
    let t = geom.t_segments();
    if sinos.len() != t || !t.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "expected {t} sinograms, got {}",
            sinos.len()
        )));
    }
    let by_segment = |i: usize| -> Result<&Sinogram> {
        sinos
            .iter()
            .find(|s| s.segment == i)
            .ok_or_else(|| Error::InvalidArgument(format!("segment {i} missing")))
    };
    let pairs = (1..=t / 2)
        .map(|j| -> Result<Pair> {
            let theta = geom.segment_angle(j)?;
            Ok(Pair {
                j,
                f: reconstruct_segment_in_frame(by_segment(j)?, grid, filt, theta)?,
                g: reconstruct_segment_in_frame(by_segment(j + t / 2)?, grid, filt, theta)?,
                theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairSet { pairs, t })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub pair: Option<(usize, usize)>,
    pub component: Component,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survivors {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub removed: Vec<Outlier>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn min_survivors(t: usize) -> usize {
    t.div_ceil(4)
}

/// Keeps values within [`OUTLIER_PIXELS`] of the median, but never fewer
/// than `ceil(t/4)` (falling back to the ones closest to the median).
/// Returns the kept indices in input order.
fn filter_component(values: &[f64], t: usize) -> Vec<usize> {
    let med = median(values);
    let mut keep: Vec<usize> = (0..values.len())
        .filter(|&i| (values[i] - med).abs() <= OUTLIER_PIXELS)
        .collect();
    let floor = min_survivors(t).min(values.len());
    if keep.len() < floor {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| {
            (values[a] - med)
                .abs()
                .total_cmp(&(values[b] - med).abs())
                .then(a.cmp(&b))
        });
        keep = order[..floor].to_vec();
        keep.sort_unstable();
    }
    keep
}

/// Per-component outlier removal around the median.
pub fn remove_outliers(estimates: &[OffsetEstimate], t: usize) -> Result<Survivors> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no offset estimates".into()));
    }
    let mut removed = Vec::new();
    let mut split = |component: Component, pick: fn(&OffsetEstimate) -> i64| -> Vec<f64> {
        let vals: Vec<f64> = estimates.iter().map(|e| pick(e) as f64).collect();
        let keep = filter_component(&vals, t);
        for (i, e) in estimates.iter().enumerate() {
            if !keep.contains(&i) {
                removed.push(Outlier {
                    pair: e.pair,
                    component,
                    value: vals[i],
                });
            }
        }
        keep.iter().map(|&i| vals[i]).collect()
    };
    let x = split(Component::X, |e| e.np_x);
    let y = split(Component::Y, |e| e.np_y);
    Ok(Survivors { x, y, removed })
}

/// The most frequent value if it occurs at least `ceil(t/4)` times,
/// otherwise the mean. Equally frequent modes resolve to the one nearest
/// the mean, then the smaller.
pub fn select_component(values: &[f64], t: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to aggregate".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut best: Option<(usize, f64)> = None;
    for &v in values {
        let count = values.iter().filter(|&&w| w == v).count();
        let better = match best {
            None => true,
            Some((bc, bv)) => {
                count > bc
                    || (count == bc
                        && ((v - mean).abs() < (bv - mean).abs() || ((v - mean).abs() == (bv - mean).abs() && v < bv)))
            }
        };
        if better {
            best = Some((count, v));
        }
    }
    let (count, mode) = best.expect("non-empty");
    Ok(if count >= min_survivors(t) { mode } else { mean })
}

pub fn select_offsets(x: &[f64], y: &[f64], t: usize) -> Result<(f64, f64)> {
    Ok((select_component(x, t)?, select_component(y, t)?))
}

/// Source-distance error and trajectory shift from aggregated pair offsets.
/// Returns `(dl_hat, ds_hat)` in mm.
pub fn invert_errors(np_final: (f64, f64), geom: &ScanGeometry, grid: &ImageGrid) -> (f64, f64) {
    let (l, h, r1) = (geom.l(), geom.h(), grid.half_extent);
    let dl = -(l + h) * r1 * np_final.1 / (h * grid.n as f64);
    let ds = (l + h) * r1 * np_final.0 / (h * grid.m as f64);
    (dl, ds)
}

/// Detector-centre offset (mm) from the horizontal offset between the two
/// half-scan arc images on a grid of half extent `r1`.
pub fn invert_cor(np_x: f64, geom: &RctGeometry, grid: &ImageGrid) -> f64 {
    (geom.l + geom.h) * grid.half_extent * np_x / (geom.l * grid.m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskParams {
    /// Half-angle of the passband (rad); defaults to the visible angle.
    #[serde(default)]
    pub alpha_band: Option<f64>,
    /// Zeroed rows at the top and bottom; defaults to width / 8.
    #[serde(default)]
    pub u0: Option<usize>,
    /// Fraction of each image side tapered before registration; defaults
    /// to [`EDGE_TAPER`].
    #[serde(default)]
    pub edge_taper: Option<f64>,
}

impl MaskParams {
    pub fn build(&self, grid: &ImageGrid, default_alpha: f64) -> Result<BowTieMask> {
        bow_tie_mask(
            grid.m,
            grid.n,
            self.alpha_band.unwrap_or(default_alpha),
            self.u0.unwrap_or(grid.n / 8),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub np_final: (f64, f64),
    pub dl_hat: f64,
    pub ds_hat: f64,
    pub per_pair: Vec<OffsetEstimate>,
    pub outliers_removed: Vec<Outlier>,
    /// Pairs whose correlation maximum was not unique.
    pub flagged_pairs: Vec<usize>,
    pub alpha_band: f64,
    pub u0: usize,
}

pub struct CalibrationRun {
    pub result: CalibrationResult,
    pub surfaces: Vec<CcsMap>,
}

/// Pairing, registration, outlier removal, aggregation and inversion, in
/// that order.
pub fn run_calibration(
    images: &[SegmentImage],
    geom: &ScanGeometry,
    grid: &ImageGrid,
    mask: &MaskParams,
) -> Result<CalibrationResult> {
    Ok(run_calibration_detailed(images, geom, grid, mask)?.result)
}

pub fn run_calibration_detailed(
    images: &[SegmentImage],
    geom: &ScanGeometry,
    grid: &ImageGrid,
    mask: &MaskParams,
) -> Result<CalibrationRun> {
    estimate_from_pairs(&pair_and_rotate(images, geom)?, geom, grid, mask)
}

/// Registration, outlier removal, aggregation and inversion for pairs that
/// are already in a common frame.
pub fn estimate_from_pairs(
    set: &PairSet,
    geom: &ScanGeometry,
    grid: &ImageGrid,
    mask: &MaskParams,
) -> Result<CalibrationRun> {
    let alpha_default = visible_angles(geom, geom.fov_radius())?.alpha_vis;
    let window = mask.build(grid, alpha_default)?;
    let t = set.t;
    let taper = tukey_window(grid.m, grid.n, mask.edge_taper.unwrap_or(EDGE_TAPER))?;
    let registered = set
        .pairs
        .par_iter()
        .map(|p| -> Result<(OffsetEstimate, CcsMap)> {
            let ccs = gcc_phat_vw(&(&p.f.values * &taper), &(&p.g.values * &taper), &window)?;
            let mut est = peak_offset(&ccs)?;
            est.pair = Some((p.j, p.j + t / 2));
            Ok((est, ccs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_pair, surfaces): (Vec<_>, Vec<_>) = registered.into_iter().unzip();
    let flagged_pairs = per_pair
        .iter()
        .filter(|e| !e.unique)
        .filter_map(|e| e.pair.map(|p| p.0))
        .collect();
    let survivors = remove_outliers(&per_pair, t)?;
    let np_final = select_offsets(&survivors.x, &survivors.y, t)?;
    let (dl_hat, ds_hat) = invert_errors(np_final, geom, grid);
    Ok(CalibrationRun {
        result: CalibrationResult {
            np_final,
            dl_hat,
            ds_hat,
            per_pair,
            outliers_removed: survivors.removed,
            flagged_pairs,
            alpha_band: window.alpha_band,
            u0: window.u0,
        },
        surfaces,
    })
}

/// Nominal geometry updated with the estimates: `l + dl_hat` and the
/// trajectory moved by `ds_hat`.
pub fn apply_correction(geom: &ScanGeometry, result: &CalibrationResult) -> Result<ScanGeometry> {
    if !(result.dl_hat.is_finite() && result.ds_hat.is_finite()) {
        return Err(Error::InvalidArgument("non-finite estimates".into()));
    }
    geom.with_l(geom.l() + result.dl_hat)?
        .with_lambda_shift(geom.lambda_shift() + result.ds_hat)
}
