//! Run configuration, read from TOML. Every section has defaults matching
//! the ten-segment reference scan, so a config only lists what it changes.
//! Lengths are in mm and angles in degrees; detector offsets may also be
//! given in detector bins.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::MaskParams;
use crate::error::{Error, Result};
use crate::geometry::{GeometryParams, ScanGeometry};
use crate::image::ImageGrid;
use crate::phantom::{EllipsePhantom, Preset};
use crate::projector::{ErrorSet, NoiseModel};
use crate::recon::rct::RctGeometry;
use crate::recon::FilterSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryParams,
    pub phantom: PhantomConfig,
    pub errors: ErrorConfig,
    pub noise: NoiseConfig,
    pub recon: ReconConfig,
    pub registration: RegistrationConfig,
    pub sweep: SweepConfig,
    pub rct: RctConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometryParams {
                l: 15.0,
                h: 170.0,
                s: 20.0,
                n_det: 768,
                du: 0.17,
                n_views: 251,
                t_extra: 1,
                r_dir: 1,
                lambda_shift: 0.0,
                t_segments: None,
            },
            phantom: PhantomConfig::default(),
            errors: ErrorConfig::default(),
            noise: NoiseConfig::default(),
            recon: ReconConfig::default(),
            registration: RegistrationConfig::default(),
            sweep: SweepConfig::default(),
            rct: RctConfig::default(),
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub preset: Preset,
    /// Ellipse table replacing the preset, one `cx cy a b tilt_deg density`
    /// per line in unit-disk coordinates.
    pub file: Option<PathBuf>,
    /// Phantom radius as a fraction of the field of view.
    pub radius_fraction: f64,
    /// Multiplies every density (1/mm).
    pub density: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            preset: Preset::ForbildHead,
            file: None,
            radius_fraction: 0.9,
            density: 0.05,
        }
    }
}

impl PhantomConfig {
    /// The phantom scaled into a field of view of radius `fov`. Relative
    /// `file` paths resolve against `base`.
    pub fn build(&self, fov: f64, base: &Path) -> Result<EllipsePhantom> {
        let unit = match &self.file {
            Some(f) => EllipsePhantom::load(&base.join(f))?,
            None => EllipsePhantom::preset(self.preset),
        };
        let ph = unit.scaled(self.radius_fraction * fov).with_density_scale(self.density);
        ph.check_support(fov);
        Ok(ph)
    }
}

/// Error terms in user units. `du_bins` adds to `du_mm` in detector bins.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorConfig {
    pub dl: f64,
    pub dh: f64,
    pub ds: f64,
    pub du_mm: f64,
    pub du_bins: f64,
    pub dv: f64,
    pub theta_lambda_deg: f64,
    pub theta_d_deg: f64,
    pub theta_in_deg: f64,
    pub theta_out_deg: f64,
}

impl ErrorConfig {
    pub fn to_error_set(&self, du: f64) -> ErrorSet {
        ErrorSet {
            dl: self.dl,
            dh: self.dh,
            ds: self.ds,
            du_off: self.du_mm + self.du_bins * du,
            dv: self.dv,
            theta_lambda: self.theta_lambda_deg.to_radians(),
            theta_d: self.theta_d_deg.to_radians(),
            theta_in: self.theta_in_deg.to_radians(),
            theta_out: self.theta_out_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Incident photons per detector bin.
    pub photons: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: false,
            photons: 5e3,
            seed: 1,
        }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> Option<NoiseModel> {
        self.enabled.then_some(NoiseModel {
            photons: self.photons,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Pixels per side of the reconstruction grid spanning the FOV.
    pub grid: usize,
    pub filter: FilterSpec,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            grid: 512,
            filter: FilterSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    /// Bow-tie half-angle; the visible angle of the geometry when unset.
    pub alpha_band_deg: Option<f64>,
    pub u0: Option<usize>,
    pub edge_taper: Option<f64>,
}

impl RegistrationConfig {
    pub fn mask_params(&self) -> MaskParams {
        MaskParams {
            alpha_band: self.alpha_band_deg.map(f64::to_radians),
            u0: self.u0,
            edge_taper: self.edge_taper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Values tried for every length error (mm).
    pub lengths_mm: Vec<f64>,
    /// Values tried for every angle error (degrees).
    pub angles_deg: Vec<f64>,
    pub grid: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lengths_mm: vec![-1.0, 2.0],
            angles_deg: vec![-1.0, 2.0],
            grid: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RctConfig {
    pub l: f64,
    pub h: f64,
    pub n_det: usize,
    pub du: f64,
    /// Views per arc.
    pub n_views: usize,
    /// Injected detector-centre offset in bins.
    pub du_bins: f64,
    pub grid: usize,
    /// Bow-tie half-angle; the half fan angle when unset.
    pub alpha_band_deg: Option<f64>,
    pub u0: Option<usize>,
    pub edge_taper: Option<f64>,
}

impl Default for RctConfig {
    fn default() -> Self {
        RctConfig {
            l: 13.75,
            h: 106.5,
            n_det: 1024,
            du: 0.127,
            n_views: 360,
            du_bins: 7.0,
            grid: 512,
            alpha_band_deg: None,
            u0: None,
            edge_taper: None,
        }
    }
}

impl RctConfig {
    pub fn geometry(&self) -> Result<RctGeometry> {
        let g = RctGeometry {
            l: self.l,
            h: self.h,
            n_det: self.n_det,
            du: self.du,
            n_views: self.n_views,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn mask_params(&self) -> MaskParams {
        MaskParams {
            alpha_band: self.alpha_band_deg.map(f64::to_radians),
            u0: self.u0,
            edge_taper: self.edge_taper,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scan_geometry()?;
        self.errors.to_error_set(self.geometry.du).validate()?;
        let p = &self.phantom;
        if !(p.radius_fraction > 0.0 && p.density.is_finite()) {
            return Err(Error::Config("phantom radius_fraction must be positive".into()));
        }
        if self.noise.enabled && !(self.noise.photons > 0.0) {
            return Err(Error::Config("noise photons must be positive".into()));
        }
        if self.recon.grid < 8 || self.sweep.grid < 8 || self.rct.grid < 8 {
            return Err(Error::Config("grids need at least 8 pixels per side".into()));
        }
        self.rct.geometry()?;
        Ok(())
    }

    pub fn scan_geometry(&self) -> Result<ScanGeometry> {
        ScanGeometry::new(self.geometry)
    }

    /// Grid of `size` pixels spanning the field of view.
    pub fn grid(&self, size: usize) -> Result<ImageGrid> {
        ImageGrid::square(size, self.scan_geometry()?.fov_radius())
    }

    pub fn error_set(&self) -> ErrorSet {
        self.errors.to_error_set(self.geometry.du)
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
