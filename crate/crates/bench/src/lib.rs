//! Shared fixtures for the benchmarks.

use smlct::{EllipsePhantom, GeometryParams, Preset, ScanGeometry};

/// The ten-segment scanner with the detector and view count divided by
/// `scale`, so a benchmark iteration stays short.
pub fn geometry(scale: usize) -> ScanGeometry {
    ScanGeometry::new(GeometryParams {
        l: 15.0,
        h: 170.0,
        s: 20.0,
        n_det: 768 / scale,
        du: 0.17 * scale as f64,
        n_views: 251 / scale,
        t_extra: 1,
        r_dir: 1,
        lambda_shift: 0.0,
        t_segments: None,
    })
    .expect("valid geometry")
}

pub fn phantom(geom: &ScanGeometry) -> EllipsePhantom {
    EllipsePhantom::preset(Preset::ForbildHead)
        .scaled(0.9 * geom.fov_radius())
        .with_density_scale(0.05)
}
