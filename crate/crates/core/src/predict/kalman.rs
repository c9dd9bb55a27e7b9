//! Scalar constant-velocity Kalman filter with Sage-Husa adaptive
//! measurement noise.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SageHusaConfig {
    /// Forgetting factor `b` of the noise recursion.
    pub forgetting: f64,
    /// White-acceleration intensity per slot.
    pub process_noise: f64,
    pub initial_measurement_noise: f64,
    pub min_measurement_noise: f64,
    /// Innovations beyond this many standard deviations are rejected; two
    /// rejections in a row restart the filter from the last two samples.
    pub gate: f64,
}

impl Default for SageHusaConfig {
    fn default() -> Self {
        SageHusaConfig {
            forgetting: 0.98,
            process_noise: 0.5,
            initial_measurement_noise: 1.0,
            min_measurement_noise: 1e-6,
            gate: 6.0,
        }
    }
}

/// One coordinate tracked over slot indices. The filter is initialised from
/// the first two measurements; missing slots are bridged by prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SageHusa {
    cfg: SageHusaConfig,
    first: Option<(usize, f64)>,
    state: Option<FilterState>,
}

#[derive(Debug, Clone, PartialEq)]
struct FilterState {
    slot: usize,
    x: Vector2<f64>,
    p: Matrix2<f64>,
    r: f64,
    updates: i32,
    /// Last rejected measurement, if the previous update was rejected.
    rejected: Option<(usize, f64)>,
}

impl SageHusa {
    pub fn new(cfg: SageHusaConfig) -> Self {
        SageHusa {
            cfg,
            first: None,
            state: None,
        }
    }

    pub fn is_initialised(&self) -> bool {
        self.state.is_some()
    }

    /// Current measurement-noise estimate.
    pub fn measurement_noise(&self) -> Option<f64> {
        self.state.as_ref().map(|s| s.r)
    }

    fn transition(steps: f64) -> Matrix2<f64> {
        Matrix2::new(1.0, steps, 0.0, 1.0)
    }

    fn process(&self, steps: f64) -> Matrix2<f64> {
        let q = self.cfg.process_noise;
        Matrix2::new(
            steps.powi(4) / 4.0,
            steps.powi(3) / 2.0,
            steps.powi(3) / 2.0,
            steps * steps,
        ) * q
    }

    fn propagate(&self, s: &FilterState, slot: usize) -> (Vector2<f64>, Matrix2<f64>) {
        let mut x = s.x;
        let mut p = s.p;
        for _ in s.slot..slot {
            let f = Self::transition(1.0);
            x = f * x;
            p = f * p * f.transpose() + self.process(1.0);
        }
        (x, p)
    }

    fn start(&self, (s0, z0): (usize, f64), slot: usize, z: f64) -> FilterState {
        assert!(slot > s0, "observations must have increasing slots");
        let r0 = self.cfg.initial_measurement_noise;
        let gap = (slot - s0) as f64;
        let vel = (z - z0) / gap;
        let p = Matrix2::new(r0, r0 / gap, r0 / gap, 2.0 * r0 / (gap * gap));
        FilterState {
            slot,
            x: Vector2::new(z, vel),
            p,
            r: r0,
            updates: 0,
            rejected: None,
        }
    }

    pub fn observe(&mut self, slot: usize, z: f64) {
        match (&mut self.state, self.first) {
            (None, None) => self.first = Some((slot, z)),
            (None, Some(first)) => self.state = Some(self.start(first, slot, z)),
            (Some(s), _) => {
                assert!(slot > s.slot, "observations must have increasing slots");
                let snapshot = s.clone();
                let (x, p) = self.propagate(&snapshot, slot);
                let e = z - x[0];
                if e * e > self.cfg.gate.powi(2) * (p[(0, 0)] + snapshot.r) {
                    match snapshot.rejected {
                        Some(prev) => self.state = Some(self.start(prev, slot, z)),
                        None => self.state.as_mut().unwrap().rejected = Some((slot, z)),
                    }
                    return;
                }
                let s = self.state.as_mut().unwrap();
                s.rejected = None;
                let b = self.cfg.forgetting;
                let d = (1.0 - b) / (1.0 - b.powi(s.updates + 2));
                s.r =
                    ((1.0 - d) * s.r + d * (e * e - p[(0, 0)])).max(self.cfg.min_measurement_noise);
                let innov = p[(0, 0)] + s.r;
                let k = Vector2::new(p[(0, 0)], p[(1, 0)]) / innov;
                s.x = x + k * e;
                let h = Matrix2::new(1.0, 0.0, 0.0, 0.0);
                s.p = (Matrix2::identity() - Matrix2::new(k[0], 0.0, k[1], 0.0) * h) * p;
                s.slot = slot;
                s.updates += 1;
            }
        }
    }

    /// Predicted position at `slot`; `None` before two measurements.
    pub fn predict(&self, slot: usize) -> Option<f64> {
        let s = self.state.as_ref()?;
        if slot <= s.slot {
            return Some(s.x[0]);
        }
        Some(self.propagate(s, slot).0[0])
    }
}
