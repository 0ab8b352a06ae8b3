#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smlct::fft::{fft2, fft2_real, ifftshift};
use smlct::*;

/// The ten-segment scanner with half the detector bins (twice as wide) and
/// half the views. Same field of view, a quarter of the work.
pub fn reduced_ten() -> ScanGeometry {
    ScanGeometry::new(GeometryParams {
        l: 15.0,
        h: 170.0,
        s: 20.0,
        n_det: 384,
        du: 0.34,
        n_views: 126,
        t_extra: 1,
        r_dir: 1,
        lambda_shift: 0.0,
        t_segments: None,
    })
    .unwrap()
}

pub fn forbild(geom: &ScanGeometry) -> EllipsePhantom {
    EllipsePhantom::preset(Preset::ForbildHead)
        .scaled(0.9 * geom.fov_radius())
        .with_density_scale(0.05)
}

pub fn project(ph: &EllipsePhantom, geom: &ScanGeometry, err: &ErrorSet) -> Vec<Sinogram> {
    (1..=geom.t_segments())
        .map(|i| forward_project_segment(ph, geom, err, i).unwrap())
        .collect()
}

pub fn random_image(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| rng.random::<f64>())
}

/// White noise with its spectrum cut to the passband of `mask`.
pub fn band_limited(mask: &BowTieMask, seed: u64) -> Array2<f64> {
    let mut spec = fft2_real(&random_image(mask.m, mask.n, seed));
    spec.zip_mut_with(&ifftshift(&mask.values), |v, &pass| {
        if !pass {
            *v = Default::default();
        }
    });
    fft2(&mut spec, true);
    spec.mapv(|v| v.re)
}

/// Circular shift: content moves right by `dc` and down by `dr`.
pub fn roll(f: &Array2<f64>, dr: i64, dc: i64) -> Array2<f64> {
    let (m, n) = f.dim();
    Array2::from_shape_fn((m, n), |(r, c)| {
        f[[
            (r as i64 - dr).rem_euclid(m as i64) as usize,
            (c as i64 - dc).rem_euclid(n as i64) as usize,
        ]]
    })
}
