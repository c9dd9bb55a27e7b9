use num_complex::Complex64;
use preempt_core::channel::{array_response, compose_channel, ArrayGeometry, ChannelParams, ChannelVector, PathParams};
use preempt_core::estimation::{decompose, ser_from_snr, LosGeometry, McsTable};
use preempt_core::harness::ScenarioConfig;
use preempt_core::identify::{correlation_matrix, hungarian_match, BeamCodebook};
use preempt_core::predict::{Observation, TrackerConfig, Trajectory};
use preempt_core::scene::{random_users, step_mobility, SceneState};
use preempt_core::scheduler::{schedule, select_mcs, validate_decision, Policy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn geom() -> ArrayGeometry {
    ArrayGeometry::half_wavelength(8, 8, 28e9)
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> ChannelVector {
    ChannelVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn users_stay_in_the_area(seed in any::<u64>(), count in 1usize..12, speed in 0.0f64..10.0) {
        let mut cfg = ScenarioConfig::default();
        cfg.users.max_speed_kmh = speed * 3.6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let area = cfg.area();
        let (lo, hi) = (cfg.users.height_min_m, cfg.users.height_max_m);
        let users = random_users(count, &area, &[], (lo, hi), cfg.max_speed(), &mut rng);
        let mut s = SceneState {
            slot: 0,
            users,
            obstacles: vec![],
            camera: cfg.camera(),
            bs_position: cfg.bs_position(),
            area,
        };
        let speeds: Vec<f64> = s.users.iter().map(|u| u.speed).collect();
        for _ in 0..200 {
            s = step_mobility(&s, 0.5, &mut rng);
            for (u, &v) in s.users.iter().zip(&speeds) {
                prop_assert!(area.contains_xy(u.position));
                prop_assert!(u.height >= lo && u.height <= hi);
                prop_assert_eq!(u.position.z, u.height);
                prop_assert!((u.velocity.norm() - v).abs() <= 1e-9 * v.max(1.0));
            }
        }
    }

    #[test]
    fn steering_vectors_have_full_energy(az in -1.5f64..1.5, el in -1.5f64..1.5) {
        let a = array_response(&geom(), az, el);
        prop_assert!((a.norm_squared() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn los_split_sums_to_the_channel(seed in any::<u64>(), d in 2.0f64..60.0, az in -1.2f64..1.2, el in -0.6f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = |rng: &mut ChaCha8Rng| PathParams {
            gain: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            distance: rng.gen_range(2.0..60.0),
            azimuth: rng.gen_range(-1.2..1.2),
            elevation: rng.gen_range(-0.6..0.6),
        };
        let nlos = (0..rng.gen_range(0..4)).map(|_| path(&mut rng)).collect();
        let h = compose_channel(&ChannelParams { user: 0, los: Some(path(&mut rng)), nlos }, &geom());
        let los = LosGeometry { distance: d, azimuth: az, elevation: el };
        let split = decompose(&h, Some(&los), &geom());
        prop_assert!((&split.los + &split.nlos - &h).norm() <= 1e-12 * h.norm());
    }

    #[test]
    fn ser_falls_with_snr(a in 0.01f64..1000.0, b in 0.01f64..1000.0, m in 1u32..5) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let bits = 2 * m;
        prop_assert!(ser_from_snr(hi, bits).unwrap() <= ser_from_snr(lo, bits).unwrap());
        let t = McsTable::default();
        let (ml, okl) = select_mcs(lo, 0.1, &t);
        let (mh, okh) = select_mcs(hi, 0.1, &t);
        if okl {
            prop_assert!(okh && mh >= ml);
        }
    }

    #[test]
    fn matching_is_one_to_one(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beams: Vec<ChannelVector> = (0..rows).map(|_| random_vector(&mut rng, 16, 1.0)).collect();
        let est: Vec<ChannelVector> = (0..cols).map(|_| random_vector(&mut rng, 16, 1.0)).collect();
        let r = correlation_matrix(&beams, &est);
        prop_assert!(r.iter().all(|&x| x >= 0.0));
        let a = hungarian_match(&r);
        let mut taken: Vec<usize> = a.user_of.iter().flatten().copied().collect();
        prop_assert_eq!(taken.len(), rows.min(cols));
        taken.sort_unstable();
        taken.dedup();
        prop_assert_eq!(taken.len(), rows.min(cols));
    }

    #[test]
    fn trajectory_window_is_bounded(cap in 1usize..6, gaps in proptest::collection::vec((1usize..4, any::<bool>()), 0..30)) {
        let mut t = Trajectory::new(cap, TrackerConfig::default());
        let mut slot = 0;
        for (g, visible) in gaps {
            slot += g;
            t.push(Observation { slot, pixel: (slot as f64, 0.0), distance: 10.0, visible });
            let w: Vec<usize> = t.window().map(|o| o.slot).collect();
            prop_assert!(w.len() <= cap);
            prop_assert!(w.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(t.recent_visible().len() <= cap);
        }
    }

    #[test]
    fn decisions_respect_the_constraints(seed in any::<u64>(), users in 1usize..12, slot in 0usize..20) {
        let cfg = ScenarioConfig::default();
        let sc = cfg.scheduler_config();
        let t = McsTable::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels: Vec<ChannelVector> = (0..users)
            .map(|_| {
                let scale = rng.gen_range(1e-7..5e-5);
                random_vector(&mut rng, 64, scale)
            })
            .collect();
        let averages: Vec<f64> = (0..users).map(|_| rng.gen_range(1.0..1e5)).collect();
        for policy in Policy::ALL {
            let d = schedule(&channels, &averages, policy, &sc, &t, slot);
            prop_assert!(validate_decision(&d, &sc, &t).is_empty());
            prop_assert_eq!(d.groups.len(), sc.rb_total);
            for g in &d.groups {
                prop_assert!(g.users.len() <= sc.group_cap());
                for w in &g.precoders {
                    prop_assert!((w.norm() - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn codewords_are_unit_norm() {
    let cb = BeamCodebook::dft_grid(&geom(), 16, 16, 0.95, 0.5, |_, _| 10.0);
    assert!(!cb.is_empty());
    for c in &cb.codewords {
        assert!((c.vector.norm() - 1.0).abs() < 1e-12);
    }
}
