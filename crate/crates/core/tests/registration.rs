mod common;

use common::{band_limited, random_image, roll};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use smlct::registration::cc_surface;
use smlct::*;

const M: usize = 64;

#[test]
fn exact_recovery_of_random_shifts() {
    let mask = bow_tie_mask(M, M, 35f64.to_radians(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let q = (M / 4) as i64;
    for trial in 0..200 {
        let f = band_limited(&mask, trial);
        let (dr, dc) = (rng.random_range(-q..=q), rng.random_range(-q..=q));
        let g = roll(&f, dr, dc);
        let est = peak_offset(&gcc_phat_vw(&f, &g, &mask).unwrap()).unwrap();
        assert_eq!((est.np_x, est.np_y), (dc, -dr), "trial {trial}");
        assert!(est.unique);
    }
}

#[test]
fn windowed_phase_correlation_beats_plain_correlation_under_noise() {
    let mask = bow_tie_mask(M, M, 35f64.to_radians(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = (M / 4) as i64;
    let (mut vw_hits, mut cc_hits) = (0, 0);
    for trial in 0..100u64 {
        let f = band_limited(&mask, 1000 + trial);
        let (lo, hi) = f
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let noise = Normal::new(0.0, 0.1 * (hi - lo)).unwrap();
        let (dr, dc) = (rng.random_range(-q..=q), rng.random_range(-q..=q));
        let g = roll(&f, dr, dc);
        let fa = f.mapv(|v| v + noise.sample(&mut rng));
        let ga = g.mapv(|v| v + noise.sample(&mut rng));
        let hit = |ccs: &CcsMap| {
            let e = peak_offset(ccs).unwrap();
            (e.np_x, e.np_y) == (dc, -dr)
        };
        vw_hits += hit(&gcc_phat_vw(&fa, &ga, &mask).unwrap()) as usize;
        cc_hits += hit(&cc_surface(&fa, &ga).unwrap()) as usize;
    }
    assert!(vw_hits >= 95, "windowed hits {vw_hits}/100");
    assert!(vw_hits >= cc_hits, "windowed {vw_hits} vs plain {cc_hits}");
}

#[test]
fn identical_images_register_at_zero() {
    let mask = bow_tie_mask(M, M, 0.5, 8).unwrap();
    let f = random_image(M, M, 3);
    let est = peak_offset(&gcc_phat_vw(&f, &f, &mask).unwrap()).unwrap();
    assert_eq!((est.np_x, est.np_y), (0, 0));
}
