//! Ground-truth narrowband channels from scene geometry.
//!
//! The BS carries a uniform planar array in the yz-plane with its broadside
//! along +x, so path azimuth/elevation measured in the world frame are also
//! the array angles. Each user keeps a slowly varying LoS small-scale
//! coefficient and a set of virtual scatterers that spawn the NLoS paths.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type ChannelVector = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing: f64,
    pub carrier_hz: f64,
}

impl ArrayGeometry {
    pub fn half_wavelength(nx: usize, ny: usize, carrier_hz: f64) -> Self {
        ArrayGeometry {
            nx,
            ny,
            spacing: 0.5,
            carrier_hz,
        }
    }

    pub fn antennas(&self) -> usize {
        self.nx * self.ny
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `exp(-j 2 pi f_c r / c)`, evaluated on the fractional wavelength count
    /// to keep precision at long ranges.
    pub fn distance_phase(&self, r: f64) -> Complex64 {
        let cycles = (r / self.wavelength()).fract();
        Complex64::from_polar(1.0, -2.0 * PI * cycles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub user: usize,
    /// Present iff the LoS link is available.
    pub los: Option<PathParams>,
    pub nlos: Vec<PathParams>,
}

impl ChannelParams {
    pub fn delta(&self) -> bool {
        self.los.is_some()
    }
}

/// UPA steering vector, row-major with the x index outermost. Every entry has
/// unit modulus.
pub fn array_response(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> ChannelVector {
    let u = azimuth.sin() * elevation.cos();
    let v = elevation.sin();
    let k = 2.0 * PI * geom.spacing;
    let mut out = ChannelVector::zeros(geom.antennas());
    for p in 0..geom.nx {
        for q in 0..geom.ny {
            out[p * geom.ny + q] = Complex64::from_polar(1.0, k * (p as f64 * u + q as f64 * v));
        }
    }
    out
}

/// Path loss in dB (positive) with `f_c` in GHz.
pub fn path_loss_db(r: f64, carrier_hz: f64) -> f64 {
    31.84 + 21.5 * r.log10() + 19.0 * (carrier_hz / 1e9).log10()
}

/// Large-scale amplitude `sqrt(beta_L)` for range `r` and shadowing draw
/// `shadow_z ~ N(0, 1)` scaled by `shadow_sigma_db`.
pub fn large_scale_gain(
    r: f64,
    carrier_hz: f64,
    shadow_z: f64,
    shadow_sigma_db: f64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!(
            "path distance must be positive, got {r}"
        )));
    }
    let db = -path_loss_db(r, carrier_hz) + shadow_z * shadow_sigma_db;
    Ok(10f64.powf(db / 20.0))
}

/// `h = sum_p alpha_p exp(-j 2 pi f_c r_p / c) a(theta_p, phi_p)` over the
/// LoS path (when present) and every NLoS path.
pub fn compose_channel(params: &ChannelParams, geom: &ArrayGeometry) -> ChannelVector {
    let mut h = ChannelVector::zeros(geom.antennas());
    for path in params.los.iter().chain(params.nlos.iter()) {
        add_path(&mut h, path, geom);
    }
    h
}

pub(crate) fn add_path(h: &mut ChannelVector, path: &PathParams, geom: &ArrayGeometry) {
    let coef = path.gain * geom.distance_phase(path.distance);
    let a = array_response(geom, path.azimuth, path.elevation);
    h.axpy(coef, &a, Complex64::new(1.0, 0.0));
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Knobs of the NLoS generator and small-scale fading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlosConfig {
    pub max_paths: usize,
    /// Per-slot survival probability of a scatterer.
    pub keep_prob: f64,
    /// Per-slot probability that an empty scatterer slot is refilled.
    pub birth_prob: f64,
    pub reflection_loss_db: f64,
    /// Scatterers are drawn uniformly in this box.
    pub region_min: Vec3,
    pub region_max: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec3,
    pub fading: Complex64,
}

/// Per-user channel memory carried across slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannelState {
    pub shadow_z: f64,
    pub los_fading: Complex64,
    pub scatterers: Vec<Scatterer>,
}

/// Large-scale settings shared by all paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub geom: ArrayGeometry,
    pub shadow_sigma_db: f64,
    /// Displacement over which small-scale coefficients decorrelate by `1/e`.
    pub fading_corr_distance: f64,
    pub nlos: NlosConfig,
}

impl ChannelModel {
    fn draw_scatterer<R: Rng + ?Sized>(&self, rng: &mut R) -> Scatterer {
        let (lo, hi) = (self.nlos.region_min, self.nlos.region_max);
        Scatterer {
            position: Vec3::new(
                rng.gen_range(lo.x..=hi.x),
                rng.gen_range(lo.y..=hi.y),
                rng.gen_range(lo.z..=hi.z),
            ),
            fading: complex_normal(rng),
        }
    }

    pub fn init_user<R: Rng + ?Sized>(&self, rng: &mut R) -> UserChannelState {
        let shadow_z: f64 = StandardNormal.sample(rng);
        let los_fading = complex_normal(rng);
        let count = rng.gen_range(1..=self.nlos.max_paths.max(1));
        let scatterers = (0..count).map(|_| self.draw_scatterer(rng)).collect();
        UserChannelState {
            shadow_z,
            los_fading,
            scatterers,
        }
    }

    /// One-slot evolution: Gauss-Markov small-scale update driven by the
    /// user displacement, then scatterer death and birth.
    pub fn evolve<R: Rng + ?Sized>(
        &self,
        state: &mut UserChannelState,
        displacement: f64,
        rng: &mut R,
    ) {
        let rho = if self.fading_corr_distance > 0.0 {
            (-displacement / self.fading_corr_distance).exp()
        } else {
            0.0
        };
        let innov = (1.0 - rho * rho).max(0.0).sqrt();
        state.los_fading = state.los_fading * rho + complex_normal(rng) * innov;
        for s in &mut state.scatterers {
            s.fading = s.fading * rho + complex_normal(rng) * innov;
        }
        self.churn_scatterers(state, rng);
    }

    /// Survivors with `keep_prob`, each vacancy refilled with `birth_prob`,
    /// and at least one path always present.
    pub fn churn_scatterers<R: Rng + ?Sized>(&self, state: &mut UserChannelState, rng: &mut R) {
        let cfg = &self.nlos;
        state
            .scatterers
            .retain(|_| rng.gen::<f64>() < cfg.keep_prob);
        let vacancies = cfg.max_paths.saturating_sub(state.scatterers.len());
        for _ in 0..vacancies {
            if rng.gen::<f64>() < cfg.birth_prob {
                let s = self.draw_scatterer(rng);
                state.scatterers.push(s);
            }
        }
        if state.scatterers.is_empty() && cfg.max_paths > 0 {
            let s = self.draw_scatterer(rng);
            state.scatterers.push(s);
        }
    }

    /// NLoS paths for a user at `user_pos`: BS -> scatterer -> user.
    pub fn nlos_paths(
        &self,
        state: &UserChannelState,
        bs: Vec3,
        user_pos: Vec3,
    ) -> Vec<PathParams> {
        let refl = 10f64.powf(-self.nlos.reflection_loss_db / 20.0);
        state
            .scatterers
            .iter()
            .map(|s| {
                let r = bs.distance(s.position) + s.position.distance(user_pos);
                let (az, el) = (s.position - bs).azimuth_elevation();
                let amp = large_scale_gain(
                    r,
                    self.geom.carrier_hz,
                    state.shadow_z,
                    self.shadow_sigma_db,
                )
                .expect("scatterer path has positive length");
                PathParams {
                    gain: s.fading * (amp * refl),
                    distance: r,
                    azimuth: az,
                    elevation: el,
                }
            })
            .collect()
    }

    pub fn los_path(&self, state: &UserChannelState, bs: Vec3, user_pos: Vec3) -> PathParams {
        let r = bs.distance(user_pos);
        let (az, el) = (user_pos - bs).azimuth_elevation();
        let amp = large_scale_gain(
            r,
            self.geom.carrier_hz,
            state.shadow_z,
            self.shadow_sigma_db,
        )
        .expect("user is not at the BS");
        PathParams {
            gain: state.los_fading * amp,
            distance: r,
            azimuth: az,
            elevation: el,
        }
    }

    /// Full parameter set; the LoS term is included only when `los` holds.
    pub fn params(
        &self,
        user: usize,
        state: &UserChannelState,
        bs: Vec3,
        user_pos: Vec3,
        los: bool,
    ) -> ChannelParams {
        ChannelParams {
            user,
            los: los.then(|| self.los_path(state, bs, user_pos)),
            nlos: self.nlos_paths(state, bs, user_pos),
        }
    }
}

/// CSV dump of ground-truth parameters: one row per path, path 0 is the LoS
/// path when present.
pub fn write_channel_csv<W: Write>(out: W, rows: &[(usize, ChannelParams)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot", "user", "delta", "path", "kind", "alpha_re", "alpha_im", "r", "theta", "phi",
    ])?;
    for (slot, p) in rows {
        let delta = if p.delta() { "1" } else { "0" };
        let los = p.los.iter().map(|x| ("los", x));
        let nlos = p.nlos.iter().map(|x| ("nlos", x));
        for (idx, (kind, path)) in los.chain(nlos).enumerate() {
            w.write_record([
                slot.to_string(),
                p.user.to_string(),
                delta.to_string(),
                idx.to_string(),
                kind.to_string(),
                path.gain.re.to_string(),
                path.gain.im.to_string(),
                path.distance.to_string(),
                path.azimuth.to_string(),
                path.elevation.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(8, 8, 28e9)
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = array_response(&geom(), 0.0, 0.0);
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn steering_norm() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a = array_response(&g, rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            assert!((a.norm_squared() - 64.0).abs() / 64.0 < 1e-12);
        }
    }

    #[test]
    fn steering_ordering() {
        let g = ArrayGeometry::half_wavelength(2, 2, 28e9);
        let a = array_response(&g, PI / 2.0, 0.0);
        let expect = [1.0, 1.0, -1.0, -1.0];
        for (z, e) in a.iter().zip(expect) {
            assert!((z - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn path_loss_values() {
        let g = large_scale_gain(1.0, 1e9, 0.0, 4.0).unwrap();
        assert!((-20.0 * g.log10() - 31.84).abs() < 1e-10);
        // 31.84 + 21.5 + 19 log10(28) = 80.8355...
        assert!((path_loss_db(10.0, 28e9) - 80.8355).abs() < 1e-3);
        for f in [1e9, 28e9, 60e9] {
            let d = path_loss_db(20.0, f) - path_loss_db(10.0, f);
            assert!((d - 6.4722).abs() < 1e-3);
        }
        assert!(large_scale_gain(0.0, 28e9, 0.0, 4.0).is_err());
        assert!(large_scale_gain(-1.0, 28e9, 0.0, 4.0).is_err());
    }

    #[test]
    fn gain_decreases_with_distance() {
        let mut prev = f64::MAX;
        for i in 1..200 {
            let g = large_scale_gain(i as f64 * 0.5, 28e9, 0.7, 4.0).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn compose_cases() {
        let g = geom();
        let empty = ChannelParams {
            user: 0,
            los: None,
            nlos: vec![],
        };
        assert_eq!(compose_channel(&empty, &g).norm(), 0.0);

        // an integer number of wavelengths makes the distance phase 1
        let r = 1000.0 * g.wavelength();
        let p = PathParams {
            gain: Complex64::new(1.0, 0.0),
            distance: r,
            azimuth: 0.3,
            elevation: -0.2,
        };
        let h = compose_channel(
            &ChannelParams {
                user: 0,
                los: Some(p),
                nlos: vec![],
            },
            &g,
        );
        assert!((h - array_response(&g, 0.3, -0.2)).norm() < 1e-9);

        let q = PathParams {
            gain: Complex64::new(0.2, -0.4),
            distance: 17.3,
            azimuth: -0.5,
            elevation: 0.1,
        };
        let los_only = compose_channel(
            &ChannelParams {
                user: 0,
                los: Some(p),
                nlos: vec![],
            },
            &g,
        );
        let nlos_only = compose_channel(
            &ChannelParams {
                user: 0,
                los: None,
                nlos: vec![q],
            },
            &g,
        );
        let both = compose_channel(
            &ChannelParams {
                user: 0,
                los: Some(p),
                nlos: vec![q],
            },
            &g,
        );
        assert!((both - (los_only + nlos_only)).norm() < 1e-12);
    }

    fn model() -> ChannelModel {
        ChannelModel {
            geom: geom(),
            shadow_sigma_db: 4.0,
            fading_corr_distance: 10.0,
            nlos: NlosConfig {
                max_paths: 3,
                keep_prob: 0.9,
                birth_prob: 0.3,
                reflection_loss_db: 10.0,
                region_min: Vec3::new(0.0, 0.0, 0.0),
                region_max: Vec3::new(20.0, 20.0, 3.0),
            },
        }
    }

    #[test]
    fn collinear_scatterer_distance() {
        let m = model();
        let bs = Vec3::new(0.0, 0.0, 0.0);
        let user = Vec3::new(10.0, 0.0, 0.0);
        let st = UserChannelState {
            shadow_z: 0.0,
            los_fading: Complex64::new(1.0, 0.0),
            scatterers: vec![Scatterer {
                position: Vec3::new(13.0, 0.0, 0.0),
                fading: Complex64::new(1.0, 0.0),
            }],
        };
        let paths = m.nlos_paths(&st, bs, user);
        assert!((paths[0].distance - (10.0 + 2.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn full_persistence_keeps_angles() {
        let mut m = model();
        m.nlos.keep_prob = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = m.init_user(&mut rng);
        let bs = Vec3::new(-12.0, 10.0, 3.0);
        let user = Vec3::new(5.0, 5.0, 1.0);
        let first = m.nlos_paths(&st, bs, user);
        for _ in 0..20 {
            m.evolve(&mut st, 0.3, &mut rng);
            let now = m.nlos_paths(&st, bs, user);
            assert!(now.len() >= first.len());
            for (a, b) in first.iter().zip(&now) {
                assert_eq!((a.azimuth, a.elevation), (b.azimuth, b.elevation));
            }
        }
    }

    #[test]
    fn no_los_term_without_flag() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let st = m.init_user(&mut rng);
        let bs = Vec3::new(-12.0, 10.0, 3.0);
        let p = m.params(0, &st, bs, Vec3::new(3.0, 3.0, 1.0), false);
        assert!(p.los.is_none());
        let nl = ChannelParams {
            user: 0,
            los: None,
            nlos: p.nlos.clone(),
        };
        assert_eq!(compose_channel(&p, &m.geom), compose_channel(&nl, &m.geom));
    }

    #[test]
    fn csv_dump_rows() {
        let p = ChannelParams {
            user: 2,
            los: Some(PathParams {
                gain: Complex64::new(1.0, 2.0),
                distance: 3.0,
                azimuth: 0.1,
                elevation: 0.2,
            }),
            nlos: vec![PathParams {
                gain: Complex64::new(0.5, 0.0),
                distance: 4.0,
                azimuth: 0.3,
                elevation: 0.0,
            }],
        };
        let mut buf = Vec::new();
        write_channel_csv(&mut buf, &[(7, p)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "7,2,1,0,los,1,2,3,0.1,0.2");
    }
}
