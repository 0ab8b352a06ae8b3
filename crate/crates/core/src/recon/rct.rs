//! Conventional rotated CT with a flat detector: full scans and the
//! two-arc symmetric half scan used for center-of-rotation estimation.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{filter_taps, FilterSpec};
use crate::error::{Error, Result};
use crate::fft::RowConvolver;
use crate::geometry::Pose;
use crate::image::{ImageGrid, SegmentImage};
use crate::phantom::{line_integral, EllipsePhantom};
use crate::projector::ErrorSet;
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RctGeometry {
    /// Source to rotation axis (mm).
    pub l: f64,
    /// Rotation axis to detector (mm).
    pub h: f64,
    pub n_det: usize,
    pub du: f64,
    /// Views per arc (half scan) or per turn (full scan).
    pub n_views: usize,
}

impl RctGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.h > 0.0 && self.du > 0.0 && self.n_det > 1 && self.n_views > 1) {
            return Err(Error::Geometry(format!("invalid rotated-CT geometry {self:?}")));
        }
        Ok(())
    }

    pub fn d(&self) -> f64 {
        self.n_det as f64 * self.du / 2.0
    }

    /// Half fan angle.
    pub fn gamma_m(&self) -> f64 {
        (self.d() / (self.l + self.h)).atan()
    }

    /// Radius of the disk inside every fan.
    pub fn fov_radius(&self) -> f64 {
        self.l * self.gamma_m().sin()
    }

    pub fn bin_u(&self, j: usize) -> f64 {
        (j as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.du
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    Full,
    /// Two opposite arcs `[-γm, γm]` and `[π - γm, π + γm]`.
    Half,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub betas: Vec<f64>,
    /// `[views × bins]`.
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RctSinogram {
    pub geometry: RctGeometry,
    pub mode: ScanMode,
    pub arcs: Vec<Arc>,
}

fn arc_angles(geom: &RctGeometry, mode: ScanMode) -> Vec<Vec<f64>> {
    let n = geom.n_views;
    match mode {
        ScanMode::Full => vec![(0..n).map(|k| k as f64 * 2.0 * PI / n as f64).collect()],
        ScanMode::Half => {
            let g = geom.gamma_m();
            let step = 2.0 * g / (n - 1) as f64;
            [0.0, PI]
                .iter()
                .map(|&c| (0..n).map(|k| c - g + k as f64 * step).collect())
                .collect()
        }
    }
}

/// Projects `phantom` with the real (erroneous) rotated scanner. Source and
/// detector errors follow the same local-frame model as the linear scans;
/// the trajectory terms do not apply.
pub fn forward_project_rct(
    phantom: &EllipsePhantom,
    geom: &RctGeometry,
    errors: &ErrorSet,
    mode: ScanMode,
) -> Result<RctSinogram> {
    geom.validate()?;
    errors.validate()?;
    errors.warn_out_of_plane();
    let (st, ct) = errors.theta_d.sin_cos();
    let arcs = arc_angles(geom, mode)
        .into_iter()
        .map(|betas| -> Result<Arc> {
            let mut values = Array2::zeros((betas.len(), geom.n_det));
            values
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .zip(betas.par_iter())
                .try_for_each(|(mut row, &beta)| -> Result<()> {
                    let src = Vec2::new(0.0, -(geom.l + errors.dl)).rotated(beta);
                    for (j, v) in row.iter_mut().enumerate() {
                        let u = geom.bin_u(j);
                        let det = Vec2::new(errors.du_off + u * ct, geom.h + errors.dh + u * st).rotated(beta);
                        *v = line_integral(phantom, &Pose::through(src, det)?);
                    }
                    Ok(())
                })?;
            Ok(Arc { betas, values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RctSinogram {
        geometry: *geom,
        mode,
        arcs,
    })
}

fn check_coverage(sino: &RctSinogram) -> Result<f64> {
    let g = &sino.geometry;
    let step_of = |a: &Arc| -> Result<f64> {
        if a.betas.len() < 2 || a.values.dim() != (a.betas.len(), g.n_det) {
            return Err(Error::DimensionMismatch("arc data does not match its angles".into()));
        }
        Ok((a.betas[a.betas.len() - 1] - a.betas[0]) / (a.betas.len() - 1) as f64)
    };
    match sino.mode {
        ScanMode::Full => {
            let [arc] = sino.arcs.as_slice() else {
                return Err(Error::InvalidArgument("full scan needs exactly one arc".into()));
            };
            let step = step_of(arc)?;
            if (step * arc.betas.len() as f64) < 2.0 * PI * (1.0 - 1e-9) {
                return Err(Error::InvalidArgument(
                    "insufficient angular range for a full scan".into(),
                ));
            }
            Ok(step)
        }
        ScanMode::Half => {
            if sino.arcs.len() != 2 {
                return Err(Error::InvalidArgument("half scan needs exactly two arcs".into()));
            }
            let need = 2.0 * g.gamma_m() * (1.0 - 1e-9);
            let mut step = 0.0;
            for a in &sino.arcs {
                step = step_of(a)?;
                if a.betas[a.betas.len() - 1] - a.betas[0] < need {
                    return Err(Error::InvalidArgument(
                        "insufficient angular range for a half-scan arc".into(),
                    ));
                }
            }
            Ok(step)
        }
    }
}

/// Fan-beam filtered backprojection, one image per arc, over the whole
/// grid. Each arc is weighted by 1/2, so a full turn reconstructs the
/// object and each arc of a half scan gives a limited-angle partial image.
pub fn reconstruct_rct(sino: &RctSinogram, grid: &ImageGrid, filt: &FilterSpec) -> Result<Vec<SegmentImage>> {
    sino.geometry.validate()?;
    let dbeta = check_coverage(sino)?;
    let g = sino.geometry;
    let n_det = g.n_det;
    let stride = n_det + 1;
    let d_total = g.l + g.h;
    let conv = RowConvolver::new(&filter_taps(filt, g.du, n_det), n_det);
    let u0 = g.bin_u(0);
    let max_t = (n_det - 1) as f64;

    sino.arcs
        .iter()
        .enumerate()
        .map(|(ai, arc)| {
            let mut q = vec![0.0; arc.betas.len() * stride];
            q.par_chunks_mut(stride).enumerate().for_each(|(k, out)| {
                let row: Vec<f64> = (0..n_det)
                    .map(|j| {
                        let u = g.bin_u(j);
                        arc.values[[k, j]] * d_total / (d_total * d_total + u * u).sqrt()
                    })
                    .collect();
                conv.apply(&row, &mut out[..n_det]);
            });
            let trig: Vec<(f64, f64)> = arc.betas.iter().map(|b| b.sin_cos()).collect();
            let mut img = SegmentImage::zeros(*grid);
            img.segment = Some(ai + 1);
            img.theta = arc.betas[arc.betas.len() / 2];
            img.values
                .axis_iter_mut(Axis(0))
                .into_par_iter()
                .enumerate()
                .for_each(|(r, mut row)| {
                    let y = grid.y_of_row(r);
                    for (c, px) in row.iter_mut().enumerate() {
                        let x = grid.x_of_col(c);
                        let mut acc = 0.0;
                        for (k, &(sb, cb)) in trig.iter().enumerate() {
                            let xl = cb * x + sb * y;
                            let depth = -sb * x + cb * y + g.l;
                            if depth <= 1e-9 {
                                continue;
                            }
                            let t = (xl * d_total / depth - u0) / g.du;
                            if t < 0.0 || t > max_t {
                                continue;
                            }
                            let i = t as usize;
                            let f = t - i as f64;
                            let base = k * stride + i;
                            acc += (q[base] + f * (q[base + 1] - q[base])) * g.l * d_total / (depth * depth);
                        }
                        *px = 0.5 * dbeta * acc;
                    }
                });
            Ok(img)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::Preset;

    fn geom() -> RctGeometry {
        RctGeometry {
            l: 13.75,
            h: 106.5,
            n_det: 256,
            du: 0.508,
            n_views: 180,
        }
    }

    #[test]
    fn fan_fov() {
        let g = RctGeometry {
            n_det: 1024,
            du: 0.127,
            ..geom()
        };
        assert!((g.fov_radius() - 6.540).abs() < 1e-3);
    }

    #[test]
    fn full_scan_disk_is_round() {
        let g = geom();
        let r1 = g.fov_radius();
        let ph = EllipsePhantom::preset(Preset::Disk)
            .scaled(0.7 * r1)
            .with_density_scale(0.1);
        let sino = forward_project_rct(&ph, &g, &ErrorSet::default(), ScanMode::Full).unwrap();
        let grid = ImageGrid::square(128, r1).unwrap();
        let imgs = reconstruct_rct(&sino, &grid, &FilterSpec::default()).unwrap();
        assert_eq!(imgs.len(), 1);
        let img = &imgs[0];
        for radius in [0.2 * r1, 0.4 * r1, 0.6 * r1] {
            let vals: Vec<f64> = (0..72)
                .map(|a| {
                    let t = a as f64 * 5f64.to_radians();
                    img.sample(radius * t.cos(), radius * t.sin()).unwrap()
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let spread = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
            assert!(
                spread / mean.abs() < 0.02,
                "radius {radius}: spread {spread}, mean {mean}"
            );
            assert!((mean - 0.1).abs() < 0.01, "mean {mean}");
        }
    }

    #[test]
    fn empty_and_insufficient() {
        let g = geom();
        let sino = forward_project_rct(&EllipsePhantom::default(), &g, &ErrorSet::default(), ScanMode::Half).unwrap();
        let grid = ImageGrid::square(32, g.fov_radius()).unwrap();
        let imgs = reconstruct_rct(&sino, &grid, &FilterSpec::default()).unwrap();
        assert_eq!(imgs.len(), 2);
        assert!(imgs.iter().all(|i| i.values.iter().all(|&v| v == 0.0)));

        let mut short = sino.clone();
        short.arcs[1].betas.truncate(20);
        short.arcs[1].values = short.arcs[1].values.slice(ndarray::s![..20, ..]).to_owned();
        assert!(reconstruct_rct(&short, &grid, &FilterSpec::default()).is_err());
        let mut as_full = sino;
        as_full.mode = ScanMode::Full;
        assert!(reconstruct_rct(&as_full, &grid, &FilterSpec::default()).is_err());
    }
}
