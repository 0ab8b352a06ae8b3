//! Forward projection of ellipse phantoms along one linear segment, with
//! geometric-error injection and photon noise.

use log::warn;
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{detector_local, Pose, ScanGeometry};
use crate::phantom::{line_integral, EllipsePhantom};
use crate::vec2::Vec2;

/// Misalignment of the real scanner relative to its nominal geometry.
/// Lengths in mm, angles in rad, all expressed in each segment's local frame
/// and shared by every segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorSet {
    /// Extra source-to-iso-center distance.
    pub dl: f64,
    /// Extra iso-center-to-detector distance.
    pub dh: f64,
    /// Source trajectory offset along its motion.
    pub ds: f64,
    /// Detector centre offset along the detector axis.
    pub du_off: f64,
    /// Out-of-plane detector offset; no effect on a 2D slice.
    pub dv: f64,
    /// Trajectory tilt in the scan plane.
    pub theta_lambda: f64,
    /// Detector tilt in the scan plane.
    pub theta_d: f64,
    /// Out-of-plane detector tilts; no effect on a 2D slice.
    pub theta_in: f64,
    pub theta_out: f64,
}

impl ErrorSet {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.dl,
            self.dh,
            self.ds,
            self.du_off,
            self.dv,
            self.theta_lambda,
            self.theta_d,
            self.theta_in,
            self.theta_out,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite error term".into()));
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        for a in [self.theta_lambda, self.theta_d, self.theta_in, self.theta_out] {
            if a.abs() >= half_pi {
                return Err(Error::InvalidArgument(format!("error angle {a} rad out of range")));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == ErrorSet::default()
    }

    pub fn has_out_of_plane(&self) -> bool {
        self.dv != 0.0 || self.theta_in != 0.0 || self.theta_out != 0.0
    }

    pub(crate) fn warn_out_of_plane(&self) {
        if self.has_out_of_plane() {
            warn!("dv, theta_in and theta_out act out of the scan plane and are ignored by the 2D model");
        }
    }
}

/// Projections of one segment, `values[[view, bin]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub segment: usize,
    pub theta: f64,
    pub values: Array2<f64>,
    /// Nominal trajectory positions; the geometry's `lambda_shift` is added
    /// on top when rays are formed.
    pub lambda_samples: Vec<f64>,
    /// Nominal geometry. Reconstruction uses this and nothing else.
    pub geometry: ScanGeometry,
    /// Errors used when simulating, kept only for the record.
    pub simulated_with: Option<ErrorSet>,
}

impl Sinogram {
    pub fn check(&self) -> Result<()> {
        let g = &self.geometry;
        g.check_segment(self.segment)?;
        if self.values.dim() != (g.n_views(), g.n_det()) || self.lambda_samples.len() != g.n_views() {
            return Err(Error::DimensionMismatch(format!(
                "sinogram {:?} vs geometry {}x{}",
                self.values.dim(),
                g.n_views(),
                g.n_det()
            )));
        }
        Ok(())
    }

    /// Same data interpreted with another geometry (e.g. after correction).
    pub fn with_geometry(&self, geometry: ScanGeometry) -> Result<Sinogram> {
        let s = Sinogram {
            geometry,
            theta: geometry.segment_angle(self.segment)?,
            lambda_samples: geometry.lambda_samples(),
            ..self.clone()
        };
        s.check()?;
        Ok(s)
    }

    pub fn zeros_like(&self) -> Sinogram {
        Sinogram {
            values: Array2::zeros(self.values.dim()),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Incident photons per detector bin.
    pub photons: f64,
    pub seed: u64,
}

/// Projects `phantom` along segment `segment` of the real (erroneous)
/// scanner and labels the result with the nominal geometry.
pub fn forward_project_segment(
    phantom: &EllipsePhantom,
    geom: &ScanGeometry,
    errors: &ErrorSet,
    segment: usize,
) -> Result<Sinogram> {
    errors.validate()?;
    errors.warn_out_of_plane();
    let theta = geom.segment_angle(segment)?;
    let lambdas = geom.lambda_samples();
    let err = (!errors.is_zero()).then_some(errors);
    let detector: Vec<Vec2> = (0..geom.n_det())
        .map(|j| detector_local(geom, geom.bin_u(j), err).rotated(theta))
        .collect();

    let mut values = Array2::<f64>::zeros((geom.n_views(), geom.n_det()));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(lambdas.par_iter())
        .try_for_each(|(mut row, &lam)| -> Result<()> {
            let src = crate::geometry::source_pose(geom, segment, lam, err)?.point;
            for (v, &det) in row.iter_mut().zip(&detector) {
                *v = line_integral(phantom, &Pose::through(src, det)?);
            }
            Ok(())
        })?;

    Ok(Sinogram {
        segment,
        theta,
        values,
        lambda_samples: lambdas,
        geometry: *geom,
        simulated_with: Some(*errors),
    })
}

/// Draws photon counts `N ~ Poisson(I0·exp(-p))` and returns
/// `-ln(max(N, 1)/I0)`. Each view has its own random stream derived from
/// `(seed, segment, view)`, so results do not depend on scheduling.
pub fn apply_poisson_noise(sino: &Sinogram, model: &NoiseModel) -> Result<Sinogram> {
    let mut out = sino.clone();
    poisson_noise_in_place(&mut out.values, model, sino.segment)?;
    Ok(out)
}

/// Noise for any `[views × bins]` array; `stream` plays the role of the
/// segment index when deriving the per-view random streams.
pub fn poisson_noise_in_place(values: &mut Array2<f64>, model: &NoiseModel, stream: usize) -> Result<()> {
    if !(model.photons > 0.0 && model.photons.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "photons must be positive, got {}",
            model.photons
        )));
    }
    let i0 = model.photons;
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(view, mut row)| {
            let mut rng = view_rng(model.seed, stream, view);
            for v in row.iter_mut() {
                let mean = i0 * (-*v).exp();
                let n = if mean > 0.0 {
                    Poisson::new(mean).map(|d| d.sample(&mut rng)).unwrap_or(0.0)
                } else {
                    0.0
                };
                *v = -(n.max(1.0) / i0).ln();
            }
        });
    Ok(())
}

pub(crate) fn view_rng(seed: u64, segment: usize, view: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((segment as u64) << 32) | view as u64);
    rng
}
