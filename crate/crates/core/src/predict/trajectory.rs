//! Per-user observation history and the classical next-state predictors.

use super::kalman::{SageHusa, SageHusaConfig};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub slot: usize,
    pub pixel: (f64, f64),
    pub distance: f64,
    /// `false` for coarse codebook estimates of users the camera missed.
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMethod {
    Linear,
    Kalman,
    External,
    HoldLast,
}

impl StateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            StateMethod::Linear => "linear",
            StateMethod::Kalman => "kalman",
            StateMethod::External => "external",
            StateMethod::HoldLast => "hold_last",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatePrediction {
    pub pixel: (f64, f64),
    pub distance: f64,
    /// Method that actually produced the value.
    pub method: StateMethod,
    /// Set when the requested method fell back to another one.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub pixel: SageHusaConfig,
    pub distance: SageHusaConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            pixel: SageHusaConfig::default(),
            distance: SageHusaConfig {
                process_noise: 0.01,
                initial_measurement_noise: 0.01,
                ..Default::default()
            },
        }
    }
}

/// Ring buffer of the last `capacity` slots plus the last `capacity` visible
/// observations, with one adaptive filter per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    capacity: usize,
    window: VecDeque<Observation>,
    visible: VecDeque<Observation>,
    filters: [SageHusa; 3],
}

impl Trajectory {
    pub fn new(capacity: usize, cfg: TrackerConfig) -> Self {
        assert!(
            capacity >= 1,
            "trajectory window must hold at least one slot"
        );
        Trajectory {
            capacity,
            window: VecDeque::with_capacity(capacity),
            visible: VecDeque::with_capacity(capacity),
            filters: [
                SageHusa::new(cfg.pixel),
                SageHusa::new(cfg.pixel),
                SageHusa::new(cfg.distance),
            ],
        }
    }

    /// Build a trajectory from visible pixel/distance samples at slots 0, 1, ...
    pub fn from_points(points: &[((f64, f64), f64)], cfg: TrackerConfig) -> Self {
        let mut t = Trajectory::new(points.len().max(1), cfg);
        for (slot, &(pixel, distance)) in points.iter().enumerate() {
            t.push(Observation {
                slot,
                pixel,
                distance,
                visible: true,
            });
        }
        t
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: Observation) {
        if let Some(last) = self.window.back() {
            assert!(obs.slot > last.slot, "trajectory slots must increase");
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(obs);
        if obs.visible {
            if self.visible.len() == self.capacity {
                self.visible.pop_front();
            }
            self.visible.push_back(obs);
            self.filters[0].observe(obs.slot, obs.pixel.0);
            self.filters[1].observe(obs.slot, obs.pixel.1);
            self.filters[2].observe(obs.slot, obs.distance);
        }
    }

    pub fn window(&self) -> impl Iterator<Item = &Observation> {
        self.window.iter()
    }

    /// Visible observations inside the current window.
    pub fn window_visible(&self) -> Vec<Observation> {
        self.window.iter().filter(|o| o.visible).copied().collect()
    }

    /// Last `capacity` visible observations regardless of gaps.
    pub fn recent_visible(&self) -> Vec<Observation> {
        self.visible.iter().copied().collect()
    }

    pub fn last(&self) -> Option<&Observation> {
        self.window.back()
    }

    pub fn last_visible(&self) -> Option<&Observation> {
        self.visible.back()
    }

    pub fn has_visible(&self) -> bool {
        !self.visible.is_empty()
    }

    fn hold(&self) -> Option<StatePrediction> {
        let o = self.last_visible().or(self.last())?;
        Some(StatePrediction {
            pixel: o.pixel,
            distance: o.distance,
            method: StateMethod::HoldLast,
            fallback: true,
        })
    }

    /// Extrapolate the last two visible observations to `slot`.
    pub fn linear(&self, slot: usize) -> Option<StatePrediction> {
        let n = self.visible.len();
        if n < 2 {
            return self.hold();
        }
        let (a, b) = (self.visible[n - 2], self.visible[n - 1]);
        let scale = (slot as f64 - b.slot as f64) / (b.slot - a.slot) as f64;
        let ext = |p: f64, q: f64| q + (q - p) * scale;
        Some(StatePrediction {
            pixel: (ext(a.pixel.0, b.pixel.0), ext(a.pixel.1, b.pixel.1)),
            distance: ext(a.distance, b.distance),
            method: StateMethod::Linear,
            fallback: false,
        })
    }

    pub fn kalman(&self, slot: usize) -> Option<StatePrediction> {
        match (
            self.filters[0].predict(slot),
            self.filters[1].predict(slot),
            self.filters[2].predict(slot),
        ) {
            (Some(x), Some(y), Some(r)) => Some(StatePrediction {
                pixel: (x, y),
                distance: r,
                method: StateMethod::Kalman,
                fallback: false,
            }),
            _ => self.hold(),
        }
    }

    /// Next-state prediction for the local methods. `None` only when nothing
    /// was ever observed.
    pub fn predict(&self, method: StateMethod, slot: usize) -> Option<StatePrediction> {
        match method {
            StateMethod::Linear => self.linear(slot),
            StateMethod::Kalman => self.kalman(slot),
            StateMethod::HoldLast => self.hold(),
            StateMethod::External => self.linear(slot).map(|p| StatePrediction {
                fallback: true,
                ..p
            }),
        }
    }
}
