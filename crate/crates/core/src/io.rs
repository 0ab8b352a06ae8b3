//! File formats. Arrays are stored as raw little-endian `f32`, row-major,
//! next to a JSON sidecar with the metadata needed to read them back.
//! Images also get a 16-bit PNG preview whose display window is recorded
//! in the sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeometryParams, ScanGeometry};
use crate::image::{ImageGrid, SegmentImage};
use crate::projector::{ErrorSet, Sinogram};
use crate::registration::CcsMap;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes `header` and `rows` as CSV. Fields are written verbatim, so they
/// must not contain commas.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_raw_f32(path: &Path, values: &Array2<f64>) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw_f32(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, expected {rows}x{cols} f32",
            path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

/// Maps `[lo, hi]` onto the full 16-bit range and writes a grayscale PNG.
pub fn write_png16(path: &Path, values: &Array2<f64>, window: (f64, f64)) -> Result<()> {
    let (rows, cols) = values.dim();
    let (lo, hi) = window;
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u16> = values
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(cols as u32, rows as u32, pixels)
        .expect("buffer size matches");
    buf.save(path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramMeta {
    pub segment: usize,
    pub theta: f64,
    pub views: usize,
    pub bins: usize,
    pub geometry: GeometryParams,
    pub simulated_with: Option<ErrorSet>,
    pub data: PathBuf,
}

fn sinogram_stem(segment: usize) -> String {
    format!("sino_{segment:02}")
}

/// Writes `sino_XX.f32` and `sino_XX.json` into `dir`.
pub fn write_sinogram(dir: &Path, sino: &Sinogram) -> Result<PathBuf> {
    let stem = sinogram_stem(sino.segment);
    let data = PathBuf::from(format!("{stem}.f32"));
    write_raw_f32(&dir.join(&data), &sino.values)?;
    let (views, bins) = sino.values.dim();
    let meta = SinogramMeta {
        segment: sino.segment,
        theta: sino.theta,
        views,
        bins,
        geometry: sino.geometry.params(),
        simulated_with: sino.simulated_with,
        data,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &meta)?;
    Ok(path)
}

pub fn read_sinogram(meta_path: &Path) -> Result<Sinogram> {
    let meta: SinogramMeta = read_json(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let values = read_raw_f32(&dir.join(&meta.data), meta.views, meta.bins)?;
    let geometry = ScanGeometry::new(meta.geometry)?;
    let sino = Sinogram {
        segment: meta.segment,
        theta: meta.theta,
        lambda_samples: geometry.lambda_samples(),
        values,
        geometry,
        simulated_with: meta.simulated_with,
    };
    sino.check()?;
    Ok(sino)
}

/// Every `sino_XX.json` in `dir`, ordered by segment.
pub fn read_sinograms(dir: &Path) -> Result<Vec<Sinogram>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("sino_"))
        })
        .collect();
    paths.sort();
    let mut sinos = paths.iter().map(|p| read_sinogram(p)).collect::<Result<Vec<_>>>()?;
    if sinos.is_empty() {
        return Err(Error::InvalidArgument(format!("no sinograms in {}", dir.display())));
    }
    sinos.sort_by_key(|s| s.segment);
    Ok(sinos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub rows: usize,
    pub cols: usize,
    pub half_extent: f64,
    pub segment: Option<usize>,
    pub theta: f64,
    /// Values mapped to black and white in the PNG preview.
    pub png_window: (f64, f64),
    pub data: PathBuf,
}

/// Writes `stem.f32`, `stem.json` and `stem.png` into `dir`. The preview
/// window defaults to the image's own value range.
pub fn write_image(dir: &Path, stem: &str, img: &SegmentImage, window: Option<(f64, f64)>) -> Result<PathBuf> {
    let data = PathBuf::from(format!("{stem}.f32"));
    write_raw_f32(&dir.join(&data), &img.values)?;
    let png_window = window.unwrap_or_else(|| img.min_max());
    write_png16(&dir.join(format!("{stem}.png")), &img.values, png_window)?;
    let meta = ImageMeta {
        rows: img.grid.m,
        cols: img.grid.n,
        half_extent: img.grid.half_extent,
        segment: img.segment,
        theta: img.theta,
        png_window,
        data,
    };
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &meta)?;
    Ok(path)
}

pub fn read_image(meta_path: &Path) -> Result<SegmentImage> {
    let meta: ImageMeta = read_json(meta_path)?;
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let values = read_raw_f32(&dir.join(&meta.data), meta.rows, meta.cols)?;
    let grid = ImageGrid::new(meta.rows, meta.cols, meta.half_extent)?;
    let mut img = SegmentImage::from_values(grid, values)?;
    img.segment = meta.segment;
    img.theta = meta.theta;
    Ok(img)
}

/// Correlation surface as raw data plus a PNG heatmap.
pub fn write_ccs(dir: &Path, stem: &str, ccs: &CcsMap) -> Result<()> {
    write_raw_f32(&dir.join(format!("{stem}.f32")), &ccs.values)?;
    let lo = ccs.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ccs.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    write_png16(&dir.join(format!("{stem}.png")), &ccs.values, (lo, hi))
}

/// Enough to rerun a command and get identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub config: String,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &crate::config::RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.noise.enabled.then_some(cfg.noise.seed),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.to_toml(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{EllipsePhantom, Preset};
    use crate::projector::forward_project_segment;

    fn small() -> ScanGeometry {
        ScanGeometry::new(GeometryParams {
            l: 15.0,
            h: 170.0,
            s: 20.0,
            n_det: 96,
            du: 1.36,
            n_views: 21,
            t_extra: 1,
            r_dir: 1,
            lambda_shift: 0.0,
            t_segments: None,
        })
        .unwrap()
    }

    #[test]
    fn sinogram_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = small();
        let ph = EllipsePhantom::preset(Preset::SheppLogan)
            .scaled(8.0)
            .with_density_scale(0.05);
        let err = ErrorSet {
            dl: 0.5,
            ..Default::default()
        };
        let s = forward_project_segment(&ph, &g, &err, 3).unwrap();
        let meta = write_sinogram(dir.path(), &s).unwrap();
        let back = read_sinogram(&meta).unwrap();
        assert_eq!(back.segment, 3);
        assert_eq!(back.simulated_with, Some(err));
        assert_eq!(back.geometry, g);
        for (a, b) in back.values.iter().zip(s.values.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        write_sinogram(dir.path(), &forward_project_segment(&ph, &g, &err, 1).unwrap()).unwrap();
        let all = read_sinograms(dir.path()).unwrap();
        assert_eq!(all.iter().map(|s| s.segment).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn image_round_trip_and_png() {
        let dir = tempfile::tempdir().unwrap();
        let grid = ImageGrid::new(16, 24, 3.0).unwrap();
        let mut img = SegmentImage::from_values(
            grid,
            Array2::from_shape_fn((16, 24), |(r, c)| (r * 24 + c) as f64 * 0.25),
        )
        .unwrap();
        img.segment = Some(2);
        let meta = write_image(dir.path(), "seg", &img, None).unwrap();
        let back = read_image(&meta).unwrap();
        assert_eq!(back.values, img.values);
        assert_eq!(back.grid, grid);
        let png = image::open(dir.path().join("seg.png")).unwrap().into_luma16();
        assert_eq!(png.dimensions(), (24, 16));
        assert_eq!(png.get_pixel(0, 0).0[0], 0);
        assert_eq!(png.get_pixel(23, 15).0[0], 65535);
        let sidecar: ImageMeta = read_json(&meta).unwrap();
        assert_eq!(sidecar.png_window, (0.0, 383.0 * 0.25));
    }

    #[test]
    fn raw_size_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f32");
        write_raw_f32(&p, &Array2::zeros((3, 4))).unwrap();
        assert!(read_raw_f32(&p, 4, 4).is_err());
        assert!(read_raw_f32(&dir.path().join("missing.f32"), 1, 1).is_err());
    }
}
