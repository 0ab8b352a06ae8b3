//! End-to-end runs behind the command line: simulate, calibrate, sweep the
//! error terms and estimate the center of rotation of a rotated scan. The
//! `run_*` functions compute; the `cmd_*` functions also write every
//! artifact and a manifest into an output directory.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    apply_correction, estimate_from_pairs, invert_cor, pairs_from_sinograms, CalibrationResult, EDGE_TAPER,
};
use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::{GeometryParams, ScanGeometry};
use crate::image::{ImageGrid, SegmentImage};
use crate::io::{self, Manifest};
use crate::metrics::{self, MetricReport};
use crate::phantom::{rasterize, EllipsePhantom};
use crate::projector::{apply_poisson_noise, forward_project_segment, poisson_noise_in_place, ErrorSet, Sinogram};
use crate::recon::rct::{forward_project_rct, reconstruct_rct, ScanMode};
use crate::recon::{assemble_smlct, reconstruct_all, FilterSpec};
use crate::registration::{gcc_phat_vw, peak_offset, tukey_window, CcsMap};
use crate::vec2::Vec2;

pub struct Simulation {
    pub geometry: ScanGeometry,
    pub phantom: EllipsePhantom,
    pub errors: ErrorSet,
    pub sinograms: Vec<Sinogram>,
}

/// Projects the configured phantom with the configured errors and noise.
/// `base` resolves relative paths in the config.
pub fn run_simulate(cfg: &RunConfig, base: &Path) -> Result<Simulation> {
    let geometry = cfg.scan_geometry()?;
    let phantom = cfg.phantom.build(geometry.fov_radius(), base)?;
    let errors = cfg.error_set();
    let sinograms = project_all(&phantom, &geometry, &errors, cfg)?;
    Ok(Simulation {
        geometry,
        phantom,
        errors,
        sinograms,
    })
}

fn project_all(
    phantom: &EllipsePhantom,
    geom: &ScanGeometry,
    errors: &ErrorSet,
    cfg: &RunConfig,
) -> Result<Vec<Sinogram>> {
    (1..=geom.t_segments())
        .map(|i| {
            let s = forward_project_segment(phantom, geom, errors, i)?;
            match cfg.noise.model() {
                Some(model) => apply_poisson_noise(&s, &model),
                None => Ok(s),
            }
        })
        .collect()
}

/// Zeroes everything outside the disk inscribed in the grid, where data
/// are complete when the grid spans the field of view.
pub fn fov_disk(img: &SegmentImage) -> SegmentImage {
    let mut out = img.clone();
    let r2 = img.grid.half_extent * img.grid.half_extent;
    for ((r, c), v) in out.values.indexed_iter_mut() {
        let (x, y) = (img.grid.x_of_col(c), img.grid.y_of_row(r));
        if x * x + y * y > r2 {
            *v = 0.0;
        }
    }
    out
}

/// RMSE and SSIM against `reference`, both restricted to the inscribed disk.
pub fn score(img: &SegmentImage, reference: &SegmentImage) -> Result<MetricReport> {
    metrics::compare(&fov_disk(img), &fov_disk(reference))
}

/// Full-scan image from sinograms, using the geometry they carry.
pub fn reconstruct_full(sinos: &[Sinogram], grid: &ImageGrid, filt: &FilterSpec) -> Result<SegmentImage> {
    assemble_smlct(&reconstruct_all(sinos, grid, filt)?, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub result: CalibrationResult,
    pub nominal_geometry: GeometryParams,
    pub corrected_geometry: GeometryParams,
    /// Errors the sinograms were simulated with, when known.
    pub injected: Option<ErrorSet>,
    pub uncorrected: Option<MetricReport>,
    pub corrected: Option<MetricReport>,
}

pub struct CalibrationOutput {
    pub report: CalibrationReport,
    pub uncorrected: SegmentImage,
    pub corrected: SegmentImage,
    pub pair_images: Vec<(SegmentImage, SegmentImage)>,
    pub surfaces: Vec<CcsMap>,
}

/// Estimates the geometric errors from the sinograms, then reconstructs
/// with the nominal and the corrected geometry. With a `reference` image
/// both reconstructions are scored against it.
pub fn run_calibrate(
    sinos: &[Sinogram],
    cfg: &RunConfig,
    reference: Option<&SegmentImage>,
) -> Result<CalibrationOutput> {
    let geom = sinos
        .first()
        .ok_or_else(|| crate::Error::InvalidArgument("no sinograms".into()))?
        .geometry;
    let grid = ImageGrid::square(cfg.recon.grid, geom.fov_radius())?;
    let filt = cfg.recon.filter;
    let pairs = pairs_from_sinograms(sinos, &grid, &filt)?;
    let run = estimate_from_pairs(&pairs, &geom, &grid, &cfg.registration.mask_params())?;
    let result = run.result;
    info!(
        "offsets ({}, {}) -> dl {:.4} mm, ds {:.4} mm",
        result.np_final.0, result.np_final.1, result.dl_hat, result.ds_hat
    );
    let corrected_geom = apply_correction(&geom, &result)?;
    let uncorrected = reconstruct_full(sinos, &grid, &filt)?;
    let corrected_sinos = sinos
        .iter()
        .map(|s| s.with_geometry(corrected_geom))
        .collect::<Result<Vec<_>>>()?;
    let corrected = reconstruct_full(&corrected_sinos, &grid, &filt)?;
    let (unc_m, cor_m) = match reference {
        Some(r) => (Some(score(&uncorrected, r)?), Some(score(&corrected, r)?)),
        None => (None, None),
    };
    Ok(CalibrationOutput {
        report: CalibrationReport {
            result,
            nominal_geometry: geom.params(),
            corrected_geometry: corrected_geom.params(),
            injected: sinos[0].simulated_with,
            uncorrected: unc_m,
            corrected: cor_m,
        },
        uncorrected,
        corrected,
        pair_images: pairs.pairs.into_iter().map(|p| (p.f, p.g)).collect(),
        surfaces: run.surfaces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Error term name, `none` for the error-free baseline.
    pub term: String,
    pub value: f64,
    pub unit: String,
    pub rmse: f64,
    pub ssim: f64,
}

pub const LENGTH_TERMS: [&str; 5] = ["dl", "dh", "ds", "du", "dv"];
pub const ANGLE_TERMS: [&str; 4] = ["theta_lambda", "theta_d", "theta_in", "theta_out"];

/// Error set with a single term set; lengths in mm, angles in degrees.
pub fn single_error(term: &str, value: f64) -> Option<ErrorSet> {
    let mut e = ErrorSet::default();
    let rad = value.to_radians();
    match term {
        "dl" => e.dl = value,
        "dh" => e.dh = value,
        "ds" => e.ds = value,
        "du" => e.du_off = value,
        "dv" => e.dv = value,
        "theta_lambda" => e.theta_lambda = rad,
        "theta_d" => e.theta_d = rad,
        "theta_in" => e.theta_in = rad,
        "theta_out" => e.theta_out = rad,
        _ => return None,
    }
    Some(e)
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub images: Vec<(String, SegmentImage)>,
    pub reference: SegmentImage,
}

/// Reconstructs with nominal geometry after injecting one error term at a
/// time, scoring each image against the phantom.
pub fn run_sweep(cfg: &RunConfig, base: &Path) -> Result<SweepOutput> {
    let geom = cfg.scan_geometry()?;
    let grid = ImageGrid::square(cfg.sweep.grid, geom.fov_radius())?;
    let phantom = cfg.phantom.build(geom.fov_radius(), base)?;
    let reference = rasterize(&phantom, &grid);
    let mut cases = vec![("none".to_string(), 0.0, "mm", ErrorSet::default())];
    for term in LENGTH_TERMS {
        for &v in &cfg.sweep.lengths_mm {
            cases.push((term.to_string(), v, "mm", single_error(term, v).expect("known term")));
        }
    }
    for term in ANGLE_TERMS {
        for &v in &cfg.sweep.angles_deg {
            cases.push((term.to_string(), v, "deg", single_error(term, v).expect("known term")));
        }
    }
    let mut rows = Vec::new();
    let mut images = Vec::new();
    for (term, value, unit, errors) in cases {
        let sinos = project_all(&phantom, &geom, &errors, cfg)?;
        let img = reconstruct_full(&sinos, &grid, &cfg.recon.filter)?;
        let m = score(&img, &reference)?;
        info!("{term} = {value} {unit}: rmse {:.5}, ssim {:.4}", m.rmse, m.ssim);
        rows.push(SweepRow {
            term: term.clone(),
            value,
            unit: unit.to_string(),
            rmse: m.rmse,
            ssim: m.ssim,
        });
        images.push((format!("{term}_{value}"), img));
    }
    Ok(SweepOutput {
        rows,
        images,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RctReport {
    pub injected_bins: f64,
    pub np_x: i64,
    pub np_y: i64,
    pub unique: bool,
    pub du_hat_mm: f64,
    pub du_hat_bins: f64,
    pub alpha_band: f64,
    pub u0: usize,
    pub fov_radius: f64,
}

pub struct RctOutput {
    pub report: RctReport,
    pub arcs: Vec<SegmentImage>,
    pub surface: CcsMap,
}

/// Half scan with an offset detector, one image per arc, registration of
/// the two arc images and conversion of the horizontal offset into the
/// detector-centre error.
pub fn run_rct_cor(cfg: &RunConfig, base: &Path) -> Result<RctOutput> {
    let rc = &cfg.rct;
    let geom = rc.geometry()?;
    let r1 = geom.fov_radius();
    let phantom = cfg.phantom.build(r1, base)?;
    let errors = ErrorSet {
        du_off: rc.du_bins * geom.du,
        ..Default::default()
    };
    let mut sino = forward_project_rct(&phantom, &geom, &errors, ScanMode::Half)?;
    if let Some(model) = cfg.noise.model() {
        for (k, arc) in sino.arcs.iter_mut().enumerate() {
            poisson_noise_in_place(&mut arc.values, &model, k + 1)?;
        }
    }
    let grid = ImageGrid::square(rc.grid, r1)?;
    let arcs = reconstruct_rct(&sino, &grid, &cfg.recon.filter)?;
    let mask_params = rc.mask_params();
    let window = mask_params.build(&grid, geom.gamma_m())?;
    let taper = tukey_window(grid.m, grid.n, mask_params.edge_taper.unwrap_or(EDGE_TAPER))?;
    let surface = gcc_phat_vw(&(&arcs[0].values * &taper), &(&arcs[1].values * &taper), &window)?;
    let est = peak_offset(&surface)?;
    let du_hat_mm = invert_cor(est.np_x as f64, &geom, &grid);
    info!("arc offset ({}, {}) -> du {:.4} mm", est.np_x, est.np_y, du_hat_mm);
    Ok(RctOutput {
        report: RctReport {
            injected_bins: rc.du_bins,
            np_x: est.np_x,
            np_y: est.np_y,
            unique: est.unique,
            du_hat_mm,
            du_hat_bins: du_hat_mm / geom.du,
            alpha_band: window.alpha_band,
            u0: window.u0,
            fov_radius: r1,
        },
        arcs,
        surface,
    })
}

fn horizontal_profile(img: &SegmentImage, samples: usize) -> Result<Vec<f64>> {
    let r = 0.95 * img.grid.half_extent;
    metrics::profile(img, Vec2::new(-r, 0.0), Vec2::new(r, 0.0), samples)
}

fn relative(out: &Path, files: &[PathBuf]) -> Vec<PathBuf> {
    files
        .iter()
        .map(|f| f.strip_prefix(out).map(Path::to_path_buf).unwrap_or_else(|_| f.clone()))
        .collect()
}

/// Writes sinograms, the phantom table and a manifest into `out`.
pub fn cmd_simulate(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Simulation> {
    io::ensure_dir(out)?;
    let sim = run_simulate(cfg, base)?;
    let mut files = Vec::new();
    for s in &sim.sinograms {
        files.push(io::write_sinogram(out, s)?);
    }
    let table = out.join("phantom.txt");
    std::fs::write(&table, sim.phantom.to_text()).map_err(|e| crate::Error::io(&table, e))?;
    files.push(table);
    let mut manifest = Manifest::new("simulate", cfg);
    manifest.outputs = relative(out, &files);
    manifest.write(out)?;
    Ok(sim)
}

/// Calibrates from the sinograms in `sino_dir` (simulating them first when
/// `sino_dir` is `None`) and writes the report, images and surfaces.
pub fn cmd_calibrate(cfg: &RunConfig, base: &Path, sino_dir: Option<&Path>, out: &Path) -> Result<CalibrationReport> {
    io::ensure_dir(out)?;
    let geom = cfg.scan_geometry()?;
    let phantom = cfg.phantom.build(geom.fov_radius(), base)?;
    let sinos = match sino_dir {
        Some(dir) => io::read_sinograms(dir)?,
        None => run_simulate(cfg, base)?.sinograms,
    };
    let grid = ImageGrid::square(cfg.recon.grid, sinos[0].geometry.fov_radius())?;
    let reference = rasterize(&phantom, &grid);
    let output = run_calibrate(&sinos, cfg, Some(&reference))?;
    let mut files = Vec::new();
    let window = reference.min_max();
    files.push(io::write_image(out, "reference", &reference, Some(window))?);
    files.push(io::write_image(out, "uncorrected", &output.uncorrected, Some(window))?);
    files.push(io::write_image(out, "corrected", &output.corrected, Some(window))?);
    for (k, ((f, g), ccs)) in output.pair_images.iter().zip(&output.surfaces).enumerate() {
        let j = k + 1;
        files.push(io::write_image(out, &format!("pair_{j:02}_f"), f, None)?);
        files.push(io::write_image(out, &format!("pair_{j:02}_g"), g, None)?);
        io::write_ccs(out, &format!("ccs_{j:02}"), ccs)?;
        files.push(out.join(format!("ccs_{j:02}.f32")));
    }
    let n = 512;
    let profiles = [
        horizontal_profile(&reference, n)?,
        horizontal_profile(&output.uncorrected, n)?,
        horizontal_profile(&output.corrected, n)?,
    ];
    let rows: Vec<Vec<String>> = (0..n)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(profiles.iter().map(|p| format!("{:.6e}", p[k])));
            row
        })
        .collect();
    let prof = out.join("profiles.csv");
    io::write_csv(&prof, &["sample", "reference", "uncorrected", "corrected"], &rows)?;
    files.push(prof);
    let pairs: Vec<Vec<String>> = output
        .report
        .result
        .per_pair
        .iter()
        .map(|e| {
            let (a, b) = e.pair.unwrap_or((0, 0));
            vec![
                a.to_string(),
                b.to_string(),
                e.np_x.to_string(),
                e.np_y.to_string(),
                e.unique.to_string(),
            ]
        })
        .collect();
    let pair_csv = out.join("pairs.csv");
    io::write_csv(&pair_csv, &["segment", "opposite", "np_x", "np_y", "unique"], &pairs)?;
    files.push(pair_csv);
    let report = out.join("report.json");
    io::write_json(&report, &output.report)?;
    files.push(report);
    let mut manifest = Manifest::new("calibrate", cfg);
    manifest.outputs = relative(out, &files);
    manifest.write(out)?;
    Ok(output.report)
}

pub fn cmd_sweep(cfg: &RunConfig, base: &Path, out: &Path) -> Result<Vec<SweepRow>> {
    io::ensure_dir(out)?;
    let sweep = run_sweep(cfg, base)?;
    let window = sweep.reference.min_max();
    let mut files = vec![io::write_image(out, "reference", &sweep.reference, Some(window))?];
    for (name, img) in &sweep.images {
        files.push(io::write_image(out, &format!("sweep_{name}"), img, Some(window))?);
    }
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.term.clone(),
                r.value.to_string(),
                r.unit.clone(),
                format!("{:.6e}", r.rmse),
                format!("{:.6}", r.ssim),
            ]
        })
        .collect();
    let table = out.join("sweep.csv");
    io::write_csv(&table, &["term", "value", "unit", "rmse", "ssim"], &rows)?;
    files.push(table);
    let mut manifest = Manifest::new("sweep", cfg);
    manifest.outputs = relative(out, &files);
    manifest.write(out)?;
    Ok(sweep.rows)
}

pub fn cmd_rct_cor(cfg: &RunConfig, base: &Path, out: &Path) -> Result<RctReport> {
    io::ensure_dir(out)?;
    let res = run_rct_cor(cfg, base)?;
    let mut files = Vec::new();
    for (k, arc) in res.arcs.iter().enumerate() {
        files.push(io::write_image(out, &format!("arc_{}", k + 1), arc, None)?);
    }
    io::write_ccs(out, "ccs", &res.surface)?;
    files.push(out.join("ccs.f32"));
    let report = out.join("report.json");
    io::write_json(&report, &res.report)?;
    files.push(report);
    let mut manifest = Manifest::new("rct-cor", cfg);
    manifest.outputs = relative(out, &files);
    manifest.write(out)?;
    Ok(res.report)
}
