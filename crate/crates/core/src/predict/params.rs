//! Channel-parameter prediction: autoregressive LoS gain, NLoS path
//! extraction from the residual estimate, and per-path tracks.

use crate::channel::{ArrayGeometry, ChannelVector, PathParams};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArConfig {
    pub order: usize,
    /// Number of most recent samples used for the fit.
    pub window: usize,
    /// A prediction larger than this multiple of the history peak is
    /// discarded in favour of the last value.
    pub blowup_ratio: f64,
}

impl Default for ArConfig {
    fn default() -> Self {
        ArConfig {
            order: 2,
            window: 8,
            blowup_ratio: 1.5,
        }
    }
}

/// One-step AR(p) prediction with least-squares (minimum-norm) complex
/// coefficients. Holds the last value when there are not enough samples for
/// a single regression row.
pub fn ar_predict(history: &[Complex64], cfg: &ArConfig) -> Option<Complex64> {
    let last = *history.last()?;
    let start = history.len().saturating_sub(cfg.window.max(cfg.order + 1));
    let h = &history[start..];
    let p = cfg.order;
    if p == 0 || h.len() <= p {
        return Some(last);
    }
    let rows = h.len() - p;
    let a = DMatrix::from_fn(rows, p, |r, c| h[r + p - 1 - c]);
    let b = DVector::from_fn(rows, |r, _| h[r + p]);
    let coef = match a
        .svd(true, true)
        .solve(&b, 1e-12 * peak(h).max(f64::MIN_POSITIVE))
    {
        Ok(c) => c,
        Err(_) => return Some(last),
    };
    let n = h.len();
    let pred: Complex64 = (0..p).map(|i| coef[i] * h[n - 1 - i]).sum();
    if !pred.re.is_finite() || !pred.im.is_finite() || pred.norm() > cfg.blowup_ratio * peak(h) {
        return Some(last);
    }
    Some(pred)
}

fn peak(h: &[Complex64]) -> f64 {
    h.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Path found in a channel vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedPath {
    pub azimuth: f64,
    pub elevation: f64,
    /// Complex amplitude multiplying the steering vector.
    pub coefficient: Complex64,
}

/// Uniform grid in the spatial frequencies `u = sin(az) cos(el)` and
/// `v = sin(el)`, evaluated separably over the array's two axes.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    geom: ArrayGeometry,
    us: Vec<f64>,
    vs: Vec<f64>,
    eu: DMatrix<Complex64>,
    ev: DMatrix<Complex64>,
}

impl SpatialGrid {
    pub fn new(geom: &ArrayGeometry, nu: usize, nv: usize) -> Self {
        let axis = |n: usize| {
            (0..n)
                .map(|i| -1.0 + 2.0 * i as f64 / n as f64)
                .collect::<Vec<_>>()
        };
        let (us, vs) = (axis(nu), axis(nv));
        let k = 2.0 * PI * geom.spacing;
        // conjugated steering factors
        let eu = DMatrix::from_fn(nu, geom.nx, |i, p| {
            Complex64::from_polar(1.0, -k * p as f64 * us[i])
        });
        let ev = DMatrix::from_fn(geom.ny, nv, |q, j| {
            Complex64::from_polar(1.0, -k * q as f64 * vs[j])
        });
        SpatialGrid {
            geom: *geom,
            us,
            vs,
            eu,
            ev,
        }
    }

    fn response(&self, u: f64, v: f64) -> ChannelVector {
        let k = 2.0 * PI * self.geom.spacing;
        let ny = self.geom.ny;
        ChannelVector::from_fn(self.geom.antennas(), |i, _| {
            let (p, q) = ((i / ny) as f64, (i % ny) as f64);
            Complex64::from_polar(1.0, k * (p * u + q * v))
        })
    }

    fn correlation(&self, h: &ChannelVector, u: f64, v: f64) -> Complex64 {
        self.response(u, v).dotc(h)
    }

    /// Grid argmax of `|a(u, v)^H h|` followed by a shrinking pattern search.
    fn peak(&self, h: &ChannelVector) -> (f64, f64) {
        let hm = DMatrix::from_fn(self.geom.nx, self.geom.ny, |p, q| h[p * self.geom.ny + q]);
        let c = &self.eu * hm * &self.ev;
        let mut best = (0, 0);
        let mut best_val = -1.0;
        for i in 0..self.us.len() {
            for j in 0..self.vs.len() {
                let (u, v) = (self.us[i], self.vs[j]);
                if u * u + v * v > 1.0 {
                    continue;
                }
                let val = c[(i, j)].norm_sqr();
                if val > best_val {
                    best_val = val;
                    best = (i, j);
                }
            }
        }
        let (mut u, mut v) = (self.us[best.0], self.vs[best.1]);
        let mut step = 2.0 / self.us.len().max(self.vs.len()) as f64;
        for _ in 0..12 {
            step *= 0.5;
            let mut moved = true;
            while moved {
                moved = false;
                for (du, dv) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                    let (nu, nv) = (u + du, v + dv);
                    if nu * nu + nv * nv > 1.0 {
                        continue;
                    }
                    let val = self.correlation(h, nu, nv).norm_sqr();
                    if val > best_val * (1.0 + 1e-12) {
                        best_val = val;
                        u = nu;
                        v = nv;
                        moved = true;
                    }
                }
            }
        }
        (u, v)
    }

    /// Greedy path search: locate the strongest direction of the residual,
    /// refit all amplitudes found so far jointly by least squares, repeat.
    /// Stops after `max_paths`, once the residual is below `floor` times the
    /// input energy, or once the next peak is indistinguishable from white
    /// noise of per-entry variance `noise_var`.
    pub fn extract(
        &self,
        h: &ChannelVector,
        max_paths: usize,
        floor: f64,
        noise_var: f64,
    ) -> Vec<ExtractedPath> {
        let total = h.norm_squared();
        if total == 0.0 {
            return Vec::new();
        }
        let n = self.geom.antennas() as f64;
        let cells = (self.us.len() * self.vs.len()).max(2) as f64;
        // max of `cells` unit exponentials exceeds ln(cells) + 4 with
        // probability about 2 %
        let detect = noise_var * (cells.ln() + 4.0);
        let mut dirs: Vec<(f64, f64)> = Vec::new();
        let mut coefs: Vec<Complex64> = Vec::new();
        let mut residual = h.clone();
        while dirs.len() < max_paths && residual.norm_squared() > floor * total {
            let (u, v) = self.peak(&residual);
            if self.correlation(&residual, u, v).norm_sqr() / n <= detect {
                break;
            }
            dirs.push((u, v));
            let cols: Vec<ChannelVector> = dirs.iter().map(|&(u, v)| self.response(u, v)).collect();
            let a = DMatrix::from_columns(&cols);
            let Ok(c) = a.clone().svd(true, true).solve(h, 1e-12) else {
                break;
            };
            residual = h - &a * &c;
            coefs = c.iter().copied().collect();
        }
        dirs.iter()
            .zip(coefs)
            .map(|(&(u, v), coefficient)| {
                let elevation = v.clamp(-1.0, 1.0).asin();
                let azimuth = (u / elevation.cos()).clamp(-1.0, 1.0).asin();
                ExtractedPath {
                    azimuth,
                    elevation,
                    coefficient,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPath {
    pub path: PathParams,
    /// Predicted power relative to the strongest predicted path.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlosTrack {
    pub id: usize,
    /// Constant reference range used to express the gain.
    pub reference_distance: f64,
    pub last_slot: usize,
    angles: VecDeque<(usize, f64, f64)>,
    gains: VecDeque<Complex64>,
}

impl NlosTrack {
    pub fn azimuth(&self) -> f64 {
        self.angles.back().unwrap().1
    }

    pub fn elevation(&self) -> f64 {
        self.angles.back().unwrap().2
    }

    pub fn gains(&self) -> impl Iterator<Item = &Complex64> {
        self.gains.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlosTrackerConfig {
    pub max_paths: usize,
    /// Association gate in radians.
    pub gate: f64,
    pub history: usize,
    /// Paths weaker than this fraction of the strongest are dropped.
    pub score_threshold: f64,
}

impl Default for NlosTrackerConfig {
    fn default() -> Self {
        NlosTrackerConfig {
            max_paths: 3,
            gate: 5f64.to_radians(),
            history: 8,
            score_threshold: 0.01,
        }
    }
}

/// Tracks of NLoS paths of one user across slots.
#[derive(Debug, Clone, PartialEq)]
pub struct NlosTracker {
    cfg: NlosTrackerConfig,
    tracks: Vec<NlosTrack>,
    next_id: usize,
}

fn angular_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

impl NlosTracker {
    pub fn new(cfg: NlosTrackerConfig) -> Self {
        NlosTracker {
            cfg,
            tracks: Vec::new(),
            next_id: 0,
        }
    }

    pub fn tracks(&self) -> &[NlosTrack] {
        &self.tracks
    }

    /// Greedy nearest-angle association of this slot's paths with the live
    /// tracks. Unmatched paths open new tracks; tracks not seen this slot
    /// are closed.
    pub fn update(
        &mut self,
        slot: usize,
        paths: &[ExtractedPath],
        geom: &ArrayGeometry,
        reference_distance: f64,
    ) {
        let mut pairs = Vec::new();
        for (ti, t) in self.tracks.iter().enumerate() {
            for (pi, p) in paths.iter().enumerate() {
                let d = angular_gap((t.azimuth(), t.elevation()), (p.azimuth, p.elevation));
                if d <= self.cfg.gate {
                    pairs.push((d, ti, pi));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_of = vec![None; paths.len()];
        let mut taken = vec![false; self.tracks.len()];
        for (_, ti, pi) in pairs {
            if !taken[ti] && track_of[pi].is_none() {
                taken[ti] = true;
                track_of[pi] = Some(ti);
            }
        }
        let mut next = Vec::with_capacity(paths.len());
        for (pi, p) in paths.iter().enumerate() {
            let mut track = match track_of[pi] {
                Some(ti) => self.tracks[ti].clone(),
                None => {
                    self.next_id += 1;
                    NlosTrack {
                        id: self.next_id - 1,
                        reference_distance,
                        last_slot: slot,
                        angles: VecDeque::new(),
                        gains: VecDeque::new(),
                    }
                }
            };
            if track.angles.len() == self.cfg.history {
                track.angles.pop_front();
                track.gains.pop_front();
            }
            track.angles.push_back((slot, p.azimuth, p.elevation));
            track
                .gains
                .push_back(p.coefficient / geom.distance_phase(track.reference_distance));
            track.last_slot = slot;
            next.push(track);
        }
        self.tracks = next;
    }

    /// Predicted NLoS paths at `slot`: AR gains, linearly extrapolated angles,
    /// scores relative to the strongest path, weak paths dropped.
    pub fn predict(&self, slot: usize, ar: &ArConfig) -> Vec<ScoredPath> {
        let mut paths: Vec<PathParams> = self
            .tracks
            .iter()
            .map(|t| {
                let gains: Vec<Complex64> = t.gains.iter().copied().collect();
                let gain = ar_predict(&gains, ar).unwrap_or_default();
                let n = t.angles.len();
                let (s1, az1, el1) = t.angles[n - 1];
                let (azimuth, elevation) = if n >= 2 {
                    let (s0, az0, el0) = t.angles[n - 2];
                    let k = (slot as f64 - s1 as f64) / (s1 - s0) as f64;
                    (
                        az1 + (az1 - az0) * k,
                        (el1 + (el1 - el0) * k).clamp(-PI / 2.0, PI / 2.0),
                    )
                } else {
                    (az1, el1)
                };
                PathParams {
                    gain,
                    distance: t.reference_distance,
                    azimuth,
                    elevation,
                }
            })
            .collect();
        paths.sort_by(|a, b| b.gain.norm_sqr().total_cmp(&a.gain.norm_sqr()));
        score_paths(paths, self.cfg.score_threshold, self.cfg.max_paths)
    }
}

/// Attach `power / strongest power` scores, drop paths scoring below
/// `threshold`, keep at most `max_paths` of the strongest.
pub fn score_paths(
    mut paths: Vec<PathParams>,
    threshold: f64,
    max_paths: usize,
) -> Vec<ScoredPath> {
    paths.sort_by(|a, b| b.gain.norm_sqr().total_cmp(&a.gain.norm_sqr()));
    let strongest = paths.first().map(|p| p.gain.norm_sqr()).unwrap_or(0.0);
    if strongest == 0.0 {
        return Vec::new();
    }
    paths
        .into_iter()
        .map(|path| ScoredPath {
            score: path.gain.norm_sqr() / strongest,
            path,
        })
        .filter(|s| s.score >= threshold)
        .take(max_paths)
        .collect()
}
