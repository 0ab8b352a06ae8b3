//! Translation registration by cross-correlation surfaces: phase-only
//! correlation restricted to a bow-tie frequency band, plus the plain,
//! globally whitened and normalized baselines.
//!
//! All surfaces use the same centred layout: the cell at column offset
//! `dx` and row offset `dr` from `(M/2, N/2)` scores `g` displaced by
//! `(dx, dr)` pixels relative to `f`.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft2, fft2_real, ifftshift};

/// Binary spectral window in centred layout (`values[[M/2, N/2]]` is DC).
#[derive(Debug, Clone, PartialEq)]
pub struct BowTieMask {
    pub m: usize,
    pub n: usize,
    pub alpha_band: f64,
    pub u0: usize,
    pub values: Array2<bool>,
}

impl BowTieMask {
    pub fn passband_fraction(&self) -> f64 {
        self.values.iter().filter(|&&b| b).count() as f64 / self.values.len() as f64
    }
}

/// Double wedge `|v| <= |u|·tan(alpha_band)` around the horizontal
/// frequency axis, with bands of `u0` rows removed at the extreme vertical
/// frequencies. Wedge boundaries and DC are kept.
pub fn bow_tie_mask(m: usize, n: usize, alpha_band: f64, u0: usize) -> Result<BowTieMask> {
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "mask needs at least 2x2 bins, got {m}x{n}"
        )));
    }
    if !(alpha_band > 0.0 && alpha_band < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!(
            "alpha_band {alpha_band} outside (0, pi/2)"
        )));
    }
    if u0 >= m / 2 {
        return Err(Error::InvalidArgument(format!(
            "u0 = {u0} must be below m/2 = {}",
            m / 2
        )));
    }
    // Double wedge around the horizontal-frequency axis.
    let slope = alpha_band.tan();
    let tol = 1e-9;
    let cut = (m / 2 - u0) as i64;
    let values = Array2::from_shape_fn((m, n), |(r, c)| {
        let v = r as i64 - (m / 2) as i64;
        let u = c as i64 - (n / 2) as i64;
        let wedge = v.abs() as f64 <= u.abs() as f64 * slope + tol;
        let zeroed = u0 > 0 && v.abs() >= cut;
        wedge && !zeroed
    });
    Ok(BowTieMask {
        m,
        n,
        alpha_band,
        u0,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GccPhatVw,
    GccPhatGw,
    Cc,
    Ncc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcsMap {
    pub values: Array2<f64>,
    pub method: Method,
    /// Largest imaginary part left by the inverse transform.
    pub imag_residue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimate {
    /// Displacement of `g` relative to `f` along x (columns).
    pub np_x: i64,
    /// Displacement of `g` relative to `f` along y (up).
    pub np_y: i64,
    pub peak_value: f64,
    /// Segment indices `(j, j + T/2)` when the estimate comes from a pair.
    pub pair: Option<(usize, usize)>,
    /// False when the maximum is shared by several cells.
    pub unique: bool,
}

fn check_dims(f: &Array2<f64>, g: &Array2<f64>) -> Result<()> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", f.dim(), g.dim())));
    }
    if f.is_empty() {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    Ok(())
}

/// Inverse transform of a cross spectrum, rearranged into the centred
/// displacement layout.
fn surface(mut spectrum: Array2<Complex64>, method: Method) -> CcsMap {
    let (m, n) = spectrum.dim();
    fft2(&mut spectrum, true);
    let imag_residue = spectrum.iter().fold(0.0f64, |a, v| a.max(v.im.abs()));
    let values = Array2::from_shape_fn((m, n), |(r, c)| {
        let lr = (m + m / 2 - r) % m;
        let lc = (n + n / 2 - c) % n;
        spectrum[[lr, lc]].re
    });
    CcsMap {
        values,
        method,
        imag_residue,
    }
}

fn cross_spectrum(f: &Array2<f64>, g: &Array2<f64>) -> Array2<Complex64> {
    let ff = fft2_real(f);
    let gg = fft2_real(g);
    let mut x = ff;
    x.zip_mut_with(&gg, |a, b| *a *= b.conj());
    x
}

fn whiten(x: &mut Array2<Complex64>, window: Option<&Array2<bool>>) {
    let max = x.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let floor = 1e-12 * max;
    for (idx, v) in x.indexed_iter_mut() {
        let mag = v.norm();
        let pass = window.is_none_or(|w| w[idx]);
        *v = if pass && mag >= floor && mag > 0.0 {
            *v / mag
        } else {
            Complex64::default()
        };
    }
}

/// Phase-only correlation restricted to the mask's passband.
pub fn gcc_phat_vw(f: &Array2<f64>, g: &Array2<f64>, mask: &BowTieMask) -> Result<CcsMap> {
    check_dims(f, g)?;
    if mask.values.dim() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} vs images {:?}",
            mask.values.dim(),
            f.dim()
        )));
    }
    let mut x = cross_spectrum(f, g);
    whiten(&mut x, Some(&ifftshift(&mask.values)));
    Ok(surface(x, Method::GccPhatVw))
}

/// Phase-only correlation over the whole spectrum.
pub fn gcc_phat_gw(f: &Array2<f64>, g: &Array2<f64>) -> Result<CcsMap> {
    check_dims(f, g)?;
    let mut x = cross_spectrum(f, g);
    whiten(&mut x, None);
    Ok(surface(x, Method::GccPhatGw))
}

/// Plain circular cross-correlation.
pub fn cc_surface(f: &Array2<f64>, g: &Array2<f64>) -> Result<CcsMap> {
    check_dims(f, g)?;
    Ok(surface(cross_spectrum(f, g), Method::Cc))
}

/// Circular correlation of the mean-removed images divided by their norms,
/// so every cell is a correlation coefficient in `[-1, 1]`.
pub fn ncc_surface(f: &Array2<f64>, g: &Array2<f64>) -> Result<CcsMap> {
    check_dims(f, g)?;
    let centre = |a: &Array2<f64>| -> Result<(Array2<f64>, f64)> {
        let mean = a.mean().unwrap_or(0.0);
        let z = a.mapv(|v| v - mean);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-300) {
            return Err(Error::InvalidArgument("NCC needs images with non-zero variance".into()));
        }
        Ok((z, norm))
    };
    let (fz, fnorm) = centre(f)?;
    let (gz, gnorm) = centre(g)?;
    let mut ccs = surface(cross_spectrum(&fz, &gz), Method::Ncc);
    let k = 1.0 / (fnorm * gnorm);
    ccs.values.mapv_inplace(|v| (v * k).clamp(-1.0, 1.0));
    Ok(ccs)
}

/// Location of the surface maximum as a signed displacement (x right, y up).
/// Ties go to the smallest displacement, then the smallest `np_y`, then the
/// smallest `np_x`; a tie or a flat surface clears `unique`.
pub fn peak_offset(ccs: &CcsMap) -> Result<OffsetEstimate> {
    let (m, n) = ccs.values.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("empty correlation surface".into()));
    }
    let max = ccs.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidArgument("non-finite correlation surface".into()));
    }
    let mut best: Option<(i64, i64, i64)> = None;
    let mut count = 0usize;
    for ((r, c), &v) in ccs.values.indexed_iter() {
        if v != max {
            continue;
        }
        count += 1;
        let np_x = c as i64 - (n / 2) as i64;
        let np_y = (m / 2) as i64 - r as i64;
        let key = (np_x * np_x + np_y * np_y, np_y, np_x);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    }
    let (_, np_y, np_x) = best.expect("maximum exists");
    if count > 1 {
        log::warn!("correlation peak shared by {count} cells; picking ({np_x}, {np_y})");
    }
    Ok(OffsetEstimate {
        np_x,
        np_y,
        peak_value: max,
        pair: None,
        unique: count == 1,
    })
}

/// Separable Tukey window: ones in the middle, raised-cosine ramps over
/// `fraction` of each side. Applied to both images before registration it
/// removes the discontinuity at the periodic border, which otherwise
/// correlates at zero shift.
pub fn tukey_window(m: usize, n: usize, fraction: f64) -> Result<Array2<f64>> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "taper fraction {fraction} outside [0, 0.5]"
        )));
    }
    let ramp = |len: usize| -> Vec<f64> {
        let k = (fraction * len as f64).round() as usize;
        (0..len)
            .map(|i| {
                let e = i.min(len - 1 - i);
                if e >= k {
                    1.0
                } else {
                    0.5 * (1.0 - (std::f64::consts::PI * (e as f64 + 0.5) / k as f64).cos())
                }
            })
            .collect()
    };
    let (wr, wc) = (ramp(m), ramp(n));
    Ok(Array2::from_shape_fn((m, n), |(r, c)| wr[r] * wc[c]))
}

/// Ratio of the highest value to the highest value outside a small
/// neighbourhood of the peak.
pub fn peak_sharpness(ccs: &CcsMap, exclude_radius: usize) -> f64 {
    let (m, n) = ccs.values.dim();
    let Ok(p) = peak_offset(ccs) else { return 0.0 };
    let pr = (m / 2) as i64 - p.np_y;
    let pc = p.np_x + (n / 2) as i64;
    let rad = exclude_radius as i64;
    let second = ccs
        .values
        .indexed_iter()
        .filter(|((r, c), _)| {
            let dr = (*r as i64 - pr).rem_euclid(m as i64);
            let dc = (*c as i64 - pc).rem_euclid(n as i64);
            let dr = dr.min(m as i64 - dr);
            let dc = dc.min(n as i64 - dc);
            dr > rad || dc > rad
        })
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if second > 0.0 {
        p.peak_value / second
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.random::<f64>())
    }

    /// `g[r][c] = f[r - dr][c - dc]` (circular): content moves right by `dc`
    /// columns and down by `dr` rows.
    fn roll(f: &Array2<f64>, dr: i64, dc: i64) -> Array2<f64> {
        let (m, n) = f.dim();
        Array2::from_shape_fn((m, n), |(r, c)| {
            f[[
                (r as i64 - dr).rem_euclid(m as i64) as usize,
                (c as i64 - dc).rem_euclid(n as i64) as usize,
            ]]
        })
    }

    #[test]
    fn mask_at_45_degrees_is_the_diagonal_wedge() {
        let mask = bow_tie_mask(16, 16, std::f64::consts::FRAC_PI_4, 0).unwrap();
        for ((r, c), &b) in mask.values.indexed_iter() {
            let v = r as i64 - 8;
            let u = c as i64 - 8;
            assert_eq!(b, v.abs() <= u.abs(), "({r}, {c})");
        }
        assert!(mask.values[[8, 8]]);
    }

    #[test]
    fn mask_is_point_symmetric() {
        for (m, n, a, u0) in [
            (16, 16, 0.3, 2),
            (15, 17, 0.7, 3),
            (64, 32, 1.2, 0),
            (512, 512, 0.3014, 64),
        ] {
            let mask = bow_tie_mask(m, n, a, u0).unwrap();
            for ((r, c), &b) in mask.values.indexed_iter() {
                let v = r as i64 - (m / 2) as i64;
                let u = c as i64 - (n / 2) as i64;
                let rr = (-v + (m / 2) as i64).rem_euclid(m as i64) as usize;
                let cc = (-u + (n / 2) as i64).rem_euclid(n as i64) as usize;
                assert_eq!(b, mask.values[[rr, cc]]);
            }
            let frac = mask.passband_fraction();
            assert!(frac > 0.0 && frac < 1.0);
        }
    }

    #[test]
    fn tukey_window_shape() {
        let w = tukey_window(64, 32, 0.125).unwrap();
        assert_eq!(w[[32, 16]], 1.0);
        assert!(w[[0, 0]] > 0.0 && w[[0, 0]] < 0.01);
        for ((r, c), &v) in w.indexed_iter() {
            assert!((v - w[[63 - r, 31 - c]]).abs() < 1e-15);
        }
        assert!(tukey_window(8, 8, 0.0).unwrap().iter().all(|&v| v == 1.0));
        assert!(tukey_window(8, 8, 0.7).is_err());
    }

    #[test]
    fn mask_zero_bands() {
        let mask = bow_tie_mask(512, 512, 1.2, 64).unwrap();
        for r in (0..64).chain(448..512) {
            assert!(mask.values.row(r).iter().all(|&b| !b), "row {r}");
        }
        assert!(mask.values.row(100).iter().any(|&b| b));
        let narrow = bow_tie_mask(512, 512, 0.3014, 64).unwrap();
        assert!(narrow.values.row(256).iter().all(|&b| b));
        assert!(bow_tie_mask(8, 8, 0.0, 0).is_err());
        assert!(bow_tie_mask(8, 8, 0.5, 4).is_err());
    }

    #[test]
    fn identity_peaks_at_origin() {
        let f = random_image(32, 40, 1);
        let mask = bow_tie_mask(32, 40, 0.5, 4).unwrap();
        for ccs in [
            gcc_phat_vw(&f, &f, &mask).unwrap(),
            gcc_phat_gw(&f, &f).unwrap(),
            cc_surface(&f, &f).unwrap(),
            ncc_surface(&f, &f).unwrap(),
        ] {
            let p = peak_offset(&ccs).unwrap();
            assert_eq!((p.np_x, p.np_y), (0, 0), "{:?}", ccs.method);
            assert!(p.unique);
        }
        let ncc = ncc_surface(&f, &f).unwrap();
        assert!((peak_offset(&ncc).unwrap().peak_value - 1.0).abs() < 1e-12);
        let g = f.mapv(|v| 2.0 * v + 10.0);
        let p = peak_offset(&ncc_surface(&f, &g).unwrap()).unwrap();
        assert_eq!((p.np_x, p.np_y), (0, 0));
        assert!((p.peak_value - 1.0).abs() < 1e-12);
        assert!(ncc_surface(&f, &Array2::from_elem((32, 40), 3.0)).is_err());
    }

    #[test]
    fn sign_convention() {
        // g is f moved 5 px right and 3 px down, i.e. (+5, -3) in y-up axes.
        let f = random_image(64, 64, 2);
        let g = roll(&f, 3, 5);
        let mask = bow_tie_mask(64, 64, 0.6, 0).unwrap();
        for ccs in [gcc_phat_vw(&f, &g, &mask).unwrap(), cc_surface(&f, &g).unwrap()] {
            let p = peak_offset(&ccs).unwrap();
            assert_eq!((p.np_x, p.np_y), (5, -3));
        }
        let back = peak_offset(&gcc_phat_gw(&g, &f).unwrap()).unwrap();
        assert_eq!((back.np_x, back.np_y), (-5, 3));
    }

    #[test]
    fn delta_surfaces() {
        let mut v = Array2::zeros((9, 10));
        v[[4, 5]] = 1.0;
        let ccs = CcsMap {
            values: v.clone(),
            method: Method::Cc,
            imag_residue: 0.0,
        };
        let p = peak_offset(&ccs).unwrap();
        assert_eq!((p.np_x, p.np_y), (0, 0));
        let mut v2 = Array2::zeros((9, 10));
        v2[[4, 6]] = 1.0;
        let p = peak_offset(&CcsMap {
            values: v2,
            ..ccs.clone()
        })
        .unwrap();
        assert_eq!((p.np_x, p.np_y), (1, 0));

        let flat = CcsMap {
            values: Array2::from_elem((9, 10), 0.5),
            ..ccs
        };
        let p = peak_offset(&flat).unwrap();
        assert!(!p.unique);
        assert_eq!((p.np_x, p.np_y), (0, 0));
    }

    #[test]
    fn tie_break_order() {
        let mut v = Array2::zeros((8, 8));
        // (+1, 0), (0, -1) and (-1, 0) all at distance 1: smallest np_y wins.
        v[[4, 5]] = 2.0;
        v[[5, 4]] = 2.0;
        v[[4, 3]] = 2.0;
        let p = peak_offset(&CcsMap {
            values: v.clone(),
            method: Method::Cc,
            imag_residue: 0.0,
        })
        .unwrap();
        assert_eq!((p.np_x, p.np_y), (0, -1));
        v[[5, 4]] = 0.0;
        let p = peak_offset(&CcsMap {
            values: v,
            method: Method::Cc,
            imag_residue: 0.0,
        })
        .unwrap();
        assert_eq!((p.np_x, p.np_y), (-1, 0));
        assert!(!p.unique);
    }

    #[test]
    fn whitening_ignores_gain() {
        let f = random_image(32, 32, 5);
        let g = roll(&random_image(32, 32, 5), 2, -1);
        let mask = bow_tie_mask(32, 32, 0.5, 2).unwrap();
        let a = gcc_phat_vw(&f, &g, &mask).unwrap();
        let b = gcc_phat_vw(&f.mapv(|v| 3.5 * v), &g.mapv(|v| 0.02 * v), &mask).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
        assert!(a.imag_residue < 1e-6);
    }

    #[test]
    fn cc_matches_spatial_correlation() {
        let f = random_image(12, 10, 8);
        let g = random_image(12, 10, 9);
        let ccs = cc_surface(&f, &g).unwrap();
        let (m, n) = f.dim();
        let max = ccs.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for dr in -(m as i64 / 2)..(m as i64 - m as i64 / 2) {
            for dc in -(n as i64 / 2)..(n as i64 - n as i64 / 2) {
                // Score of g displaced by (dc, dr) relative to f.
                let direct: f64 = (0..m)
                    .flat_map(|r| (0..n).map(move |c| (r, c)))
                    .map(|(r, c)| {
                        let gr = (r as i64 + dr).rem_euclid(m as i64) as usize;
                        let gc = (c as i64 + dc).rem_euclid(n as i64) as usize;
                        f[[r, c]] * g[[gr, gc]]
                    })
                    .sum();
                let cell = ccs.values[[(dr + m as i64 / 2) as usize, (dc + n as i64 / 2) as usize]];
                assert!((cell - direct).abs() <= 1e-6 * max);
            }
        }
    }

    #[test]
    fn antisymmetry_on_random_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let f = random_image(48, 48, 100 + trial);
            let (dr, dc) = (rng.random_range(-10..=10), rng.random_range(-10..=10));
            let g = roll(&f, dr, dc);
            let a = peak_offset(&gcc_phat_gw(&f, &g).unwrap()).unwrap();
            let b = peak_offset(&gcc_phat_gw(&g, &f).unwrap()).unwrap();
            assert_eq!((a.np_x, a.np_y), (dc, -dr));
            assert_eq!((a.np_x, a.np_y), (-b.np_x, -b.np_y));
        }
    }
}
