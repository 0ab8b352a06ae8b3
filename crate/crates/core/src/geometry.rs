//! Acquisition geometry of a symmetric multi-linear-trajectory scan.
//!
//! Every segment has its own local frame: the source moves along the x axis
//! at `y = -l`, the flat detector sits at `y = h` with bins along x, and the
//! central ray points along +y. Segment `i` (1-based) is that frame rotated
//! counter-clockwise (physical y up) by `theta_i`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projector::ErrorSet;
use crate::vec2::Vec2;

/// User-facing geometry parameters; [`ScanGeometry`] adds the derived fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    /// Iso-center to source-trajectory distance (mm).
    pub l: f64,
    /// Iso-center to detector distance (mm).
    pub h: f64,
    /// Half trajectory length (mm).
    pub s: f64,
    pub n_det: usize,
    /// Detector bin width (mm).
    pub du: f64,
    pub n_views: usize,
    #[serde(default)]
    pub t_extra: usize,
    /// +1 advances segments clockwise as displayed (rows down), which is
    /// counter-clockwise in the physical y-up frame.
    #[serde(default = "default_r_dir")]
    pub r_dir: i8,
    /// Offset added to every nominal trajectory position (mm). Zero for an
    /// ideal scanner; set by trajectory-shift correction.
    #[serde(default)]
    pub lambda_shift: f64,
    /// Optional explicit segment count, checked against the derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_segments: Option<usize>,
}

fn default_r_dir() -> i8 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryParams", into = "GeometryParams")]
pub struct ScanGeometry {
    l: f64,
    h: f64,
    s: f64,
    n_det: usize,
    du: f64,
    n_views: usize,
    t_extra: usize,
    r_dir: i8,
    lambda_shift: f64,
    d: f64,
    delta_theta: f64,
    t_segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLayout {
    pub delta_theta: f64,
    pub t_segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibleAngles {
    pub alpha_vis: f64,
    pub vartheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub point: Vec2,
    pub direction: Vec2,
}

impl Pose {
    pub fn new(point: Vec2, direction: Vec2) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidArgument("pose direction must be non-zero".into()));
        }
        Ok(Pose {
            point,
            direction: direction * (1.0 / n),
        })
    }

    /// Line through `a` and `b`, oriented from `a` to `b`.
    pub fn through(a: Vec2, b: Vec2) -> Result<Self> {
        Pose::new(a, b - a)
    }
}

/// Coverage angle of one segment and the number of segments needed.
pub fn segment_layout(h: f64, d: f64, t_extra: usize) -> Result<SegmentLayout> {
    if !(h > 0.0 && d > 0.0) {
        return Err(Error::Geometry(format!("need h > 0 and d > 0, got h={h}, d={d}")));
    }
    let delta_theta = 2.0 * (d / h).atan();
    // Guard against 2π/Δθ landing a hair above an integer through rounding.
    let ratio = 2.0 * PI / delta_theta;
    let base = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round()
    } else {
        ratio.ceil()
    } as usize;
    let t_segments = base + t_extra;
    if !t_segments.is_multiple_of(2) {
        return Err(Error::Geometry(format!(
            "segment count {base} + {t_extra} = {t_segments} is odd; adjust t_extra"
        )));
    }
    Ok(SegmentLayout {
        delta_theta,
        t_segments,
    })
}

impl ScanGeometry {
    pub fn new(p: GeometryParams) -> Result<Self> {
        let finite = [p.l, p.h, p.s, p.du, p.lambda_shift].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Geometry("non-finite parameter".into()));
        }
        if !(p.l > 0.0 && p.h > 0.0 && p.s > 0.0 && p.du > 0.0 && p.n_det > 0) {
            return Err(Error::Geometry("l, h, s, du and n_det must be positive".into()));
        }
        if p.n_views < 2 {
            return Err(Error::Geometry("n_views must be at least 2".into()));
        }
        if p.r_dir != 1 && p.r_dir != -1 {
            return Err(Error::Geometry(format!("r_dir must be +1 or -1, got {}", p.r_dir)));
        }
        let d = p.n_det as f64 * p.du / 2.0;
        if p.s * p.h - d * p.l <= 0.0 {
            return Err(Error::Geometry(format!(
                "s*h - d*l = {} <= 0: no field of view",
                p.s * p.h - d * p.l
            )));
        }
        let layout = segment_layout(p.h, d, p.t_extra)?;
        if let Some(t) = p.t_segments {
            if t != layout.t_segments {
                return Err(Error::Geometry(format!(
                    "t_segments = {t} but the layout requires {}",
                    layout.t_segments
                )));
            }
        }
        Ok(ScanGeometry {
            l: p.l,
            h: p.h,
            s: p.s,
            n_det: p.n_det,
            du: p.du,
            n_views: p.n_views,
            t_extra: p.t_extra,
            r_dir: p.r_dir,
            lambda_shift: p.lambda_shift,
            d,
            delta_theta: layout.delta_theta,
            t_segments: layout.t_segments,
        })
    }

    pub fn params(&self) -> GeometryParams {
        GeometryParams {
            l: self.l,
            h: self.h,
            s: self.s,
            n_det: self.n_det,
            du: self.du,
            n_views: self.n_views,
            t_extra: self.t_extra,
            r_dir: self.r_dir,
            lambda_shift: self.lambda_shift,
            t_segments: Some(self.t_segments),
        }
    }

    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn n_det(&self) -> usize {
        self.n_det
    }
    pub fn du(&self) -> f64 {
        self.du
    }
    pub fn n_views(&self) -> usize {
        self.n_views
    }
    pub fn t_extra(&self) -> usize {
        self.t_extra
    }
    pub fn t_segments(&self) -> usize {
        self.t_segments
    }
    /// Angular coverage of one segment, `2·atan(d/h)`.
    pub fn delta_theta(&self) -> f64 {
        self.delta_theta
    }
    pub fn r_dir(&self) -> i8 {
        self.r_dir
    }
    pub fn lambda_shift(&self) -> f64 {
        self.lambda_shift
    }

    /// Angle between consecutive segment frames. Segments are spread evenly
    /// over the full turn so that segment `j + T/2` faces segment `j`.
    pub fn rotation_step(&self) -> f64 {
        2.0 * PI / self.t_segments as f64
    }

    /// Rotation of segment `i` (1-based).
    pub fn segment_angle(&self, i: usize) -> Result<f64> {
        self.check_segment(i)?;
        Ok((i - 1) as f64 * f64::from(self.r_dir) * self.rotation_step())
    }

    pub fn check_segment(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.t_segments {
            return Err(Error::InvalidArgument(format!(
                "segment index {i} outside 1..={}",
                self.t_segments
            )));
        }
        Ok(())
    }

    /// Nominal trajectory samples, uniform over `[-s, s]` inclusive.
    pub fn lambda_samples(&self) -> Vec<f64> {
        let n = self.n_views;
        let step = 2.0 * self.s / (n - 1) as f64;
        (0..n).map(|k| -self.s + k as f64 * step).collect()
    }

    pub fn lambda_step(&self) -> f64 {
        2.0 * self.s / (self.n_views - 1) as f64
    }

    /// Detector coordinate of bin `j` (bin centre, relative to the detector centre).
    pub fn bin_u(&self, j: usize) -> f64 {
        (j as f64 - (self.n_det as f64 - 1.0) / 2.0) * self.du
    }

    pub fn fov_radius(&self) -> f64 {
        fov_radius_raw(self.l, self.h, self.s, self.d)
    }

    pub fn with_l(&self, l: f64) -> Result<Self> {
        ScanGeometry::new(GeometryParams { l, ..self.params() })
    }

    pub fn with_lambda_shift(&self, lambda_shift: f64) -> Result<Self> {
        ScanGeometry::new(GeometryParams {
            lambda_shift,
            ..self.params()
        })
    }

    pub fn with_r_dir(&self, r_dir: i8) -> Result<Self> {
        ScanGeometry::new(GeometryParams { r_dir, ..self.params() })
    }
}

impl TryFrom<GeometryParams> for ScanGeometry {
    type Error = Error;
    fn try_from(p: GeometryParams) -> Result<Self> {
        ScanGeometry::new(p)
    }
}

impl From<ScanGeometry> for GeometryParams {
    fn from(g: ScanGeometry) -> Self {
        g.params()
    }
}

fn fov_radius_raw(l: f64, h: f64, s: f64, d: f64) -> f64 {
    (s * h - d * l) / ((l + h).powi(2) + (s + d).powi(2)).sqrt()
}

/// Radius of the disk measured from every direction.
pub fn fov_radius(geom: &ScanGeometry) -> Result<f64> {
    let r = geom.fov_radius();
    if !(r > 0.0) {
        return Err(Error::Geometry("no field of view".into()));
    }
    Ok(r)
}

/// Same formula on raw parameters, for layouts that are not full geometries
/// (e.g. a point detector with `d = 0`).
pub fn fov_radius_from(l: f64, h: f64, s: f64, d: f64) -> Result<f64> {
    let r = fov_radius_raw(l, h, s, d);
    if !(r > 0.0) {
        return Err(Error::Geometry(format!(
            "s*h <= d*l: no field of view (l={l}, h={h}, s={s}, d={d})"
        )));
    }
    Ok(r)
}

/// Boundary angles of the band of edge orientations a segment sees: every
/// ray direction within `alpha_vis` of the central ray covers the whole
/// field of view, and nothing beyond `vartheta` is measured at all.
pub fn visible_angles(geom: &ScanGeometry, r1: f64) -> Result<VisibleAngles> {
    let (d, h, l, s) = (geom.d, geom.h, geom.l, geom.s);
    if !(r1 >= 0.0) || r1 >= d || r1 >= h {
        return Err(Error::Geometry(format!(
            "visible angles need 0 <= r1 < min(d, h); got r1={r1}, d={d}, h={h}"
        )));
    }
    let alpha_vis = ((d * d - r1 * r1) / (d * h + r1 * (d * d + h * h - r1 * r1).sqrt())).atan();
    let vartheta = PI / 2.0 - ((l + h) / (s + d)).atan();
    Ok(VisibleAngles { alpha_vis, vartheta })
}

fn source_local(geom: &ScanGeometry, lambda: f64, errors: Option<&ErrorSet>) -> Vec2 {
    let lam = lambda + geom.lambda_shift;
    match errors {
        None => Vec2::new(lam, -geom.l),
        Some(e) => Vec2::new(
            lam * e.theta_lambda.cos() + e.ds,
            lam * e.theta_lambda.sin() - (geom.l + e.dl),
        ),
    }
}

fn check_lambda(geom: &ScanGeometry, lambda: f64) -> Result<()> {
    let tol = 1e-9 * geom.s;
    if !(lambda.abs() <= geom.s + tol) {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} outside [-{s}, {s}]",
            s = geom.s
        )));
    }
    Ok(())
}

/// Source position for trajectory sample `lambda` of segment `segment`.
/// The direction is the segment's central-ray axis.
pub fn source_pose(geom: &ScanGeometry, segment: usize, lambda: f64, errors: Option<&ErrorSet>) -> Result<Pose> {
    check_lambda(geom, lambda)?;
    let theta = geom.segment_angle(segment)?;
    let errors = errors.filter(|e| !e.is_zero());
    Ok(Pose {
        point: source_local(geom, lambda, errors).rotated(theta),
        direction: Vec2::new(0.0, 1.0).rotated(theta),
    })
}

/// Centre of detector bin `u` (detector coordinate, mm) in the segment's
/// local frame, with detector offset, distance and in-plane tilt errors.
pub(crate) fn detector_local(geom: &ScanGeometry, u: f64, errors: Option<&ErrorSet>) -> Vec2 {
    match errors {
        None => Vec2::new(u, geom.h),
        Some(e) => {
            let (st, ct) = e.theta_d.sin_cos();
            Vec2::new(e.du_off + u * ct, geom.h + e.dh + u * st)
        }
    }
}

/// Ray from the source at `lambda` to the centre of detector bin `bin`
/// (stationary detector, moving source).
pub fn ray(geom: &ScanGeometry, segment: usize, lambda: f64, bin: usize, errors: Option<&ErrorSet>) -> Result<Pose> {
    check_lambda(geom, lambda)?;
    if bin >= geom.n_det {
        return Err(Error::InvalidArgument(format!("bin {bin} outside detector")));
    }
    let theta = geom.segment_angle(segment)?;
    let errors = errors.filter(|e| !e.is_zero());
    let src = source_local(geom, lambda, errors);
    let det = detector_local(geom, geom.bin_u(bin), errors);
    Pose::through(src.rotated(theta), det.rotated(theta))
}

/// The same ray built the other way round: source fixed at `(0, -l)` while
/// object and detector translate together by `-lambda`. The result is
/// expressed in the object's frame so it can be compared with [`ray`].
pub fn ray_translating_object(geom: &ScanGeometry, segment: usize, lambda: f64, bin: usize) -> Result<Pose> {
    check_lambda(geom, lambda)?;
    if bin >= geom.n_det {
        return Err(Error::InvalidArgument(format!("bin {bin} outside detector")));
    }
    let theta = geom.segment_angle(segment)?;
    let lam = lambda + geom.lambda_shift;
    let object_offset = Vec2::new(-lam, 0.0).rotated(theta);
    let src_lab = Vec2::new(0.0, -geom.l).rotated(theta);
    let det_lab = Vec2::new(geom.bin_u(bin) - lam, geom.h).rotated(theta);
    Pose::through(src_lab - object_offset, det_lab - object_offset)
}
