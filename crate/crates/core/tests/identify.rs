mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use preempt_core::channel::{array_response, ArrayGeometry};
use preempt_core::identify::{
    codebook_fallback, correlation_matrix, hungarian_match, min_cost_assignment, BeamCodebook,
    COST_EPSILON,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn six_by_eight_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..300 {
        let r = DMatrix::from_fn(6, 8, |_, _| rng.gen_range(0.0..10.0));
        let a = hungarian_match(&r);
        let cost: Vec<Vec<f64>> =
            (0..6).map(|i| (0..8).map(|k| 1.0 / (r[(i, k)] + COST_EPSILON)).collect()).collect();
        let best = common::brute_force_assignment(&cost);
        assert!((a.total_cost - best).abs() <= 1e-9 * best, "{} vs {best}", a.total_cost);
        let mut used: Vec<usize> = a.user_of.iter().map(|u| u.unwrap()).collect();
        let recomputed: f64 = used.iter().enumerate().map(|(i, &k)| cost[i][k]).sum();
        assert!((recomputed - a.total_cost).abs() <= 1e-9 * best);
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 6);
    }
}

#[test]
fn raw_costs_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..300 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(n..=8);
        let c = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-5.0..5.0));
        let (assign, total) = min_cost_assignment(&c);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..m).map(|k| c[(i, k)]).collect()).collect();
        assert!((total - common::brute_force_assignment(&rows)).abs() < 1e-9);
        assert!(assign.iter().all(Option::is_some));
    }
}

#[test]
fn three_users_pick_their_own_beam() {
    let g = ArrayGeometry::half_wavelength(8, 8, 28e9);
    let dirs = [(-0.6, 0.1), (0.05, -0.2), (0.7, 0.15)];
    let beams: Vec<_> = dirs.iter().map(|&(a, e)| array_response(&g, a, e)).collect();
    let gains = [Complex64::new(0.3, 0.1), Complex64::new(-1.2, 0.4), Complex64::new(0.0, 0.8)];
    let estimates: Vec<_> = beams.iter().zip(gains).map(|(b, a)| b * a).collect();
    let r = correlation_matrix(&beams, &estimates);
    for i in 0..3 {
        let row = r.row(i);
        let best = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(best, i);
    }
    assert_eq!(hungarian_match(&r).user_of, vec![Some(0), Some(1), Some(2)]);
}

#[test]
fn codebook_error_within_half_a_grid_step() {
    let g = ArrayGeometry::half_wavelength(8, 8, 28e9);
    let (n, lim) = (16, 0.7);
    let book = BeamCodebook::dft_grid(&g, n, n, lim, lim, |_, _| 10.0);
    assert_eq!(book.len(), 256);
    let step = 2.0 * lim / (n - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let (u, v): (f64, f64) = (rng.gen_range(-lim..lim), rng.gen_range(-lim..lim));
        let el = v.asin();
        let az = (u / el.cos()).asin();
        let gain = Complex64::from_polar(rng.gen_range(0.1..2.0), rng.gen_range(0.0..6.28));
        let cw = codebook_fallback(&book, &(array_response(&g, az, el) * gain));
        let (cu, cv) = (cw.azimuth.sin() * cw.elevation.cos(), cw.elevation.sin());
        assert!((cu - u).abs() <= step / 2.0 + 1e-9, "u {u} picked {cu}");
        assert!((cv - v).abs() <= step / 2.0 + 1e-9, "v {v} picked {cv}");
        // same point as the nearest-grid oracle
        let nearest = |x: f64| ((x + lim) / step).round() * step - lim;
        assert!((cu - nearest(u)).abs() < 1e-9 && (cv - nearest(v)).abs() < 1e-9);
    }
}
