//! Next-slot prediction of user state, blockage and channel parameters.

pub mod blockage;
pub mod external;
pub mod kalman;
pub mod params;
pub mod prompt;
pub mod trajectory;

pub use blockage::{predict_blockage, OverlapSet, PredictedPoint};
pub use external::{ExternalConfig, ExternalPredictor, GateContext};
pub use kalman::{SageHusa, SageHusaConfig};
pub use params::{
    ar_predict, score_paths, ArConfig, NlosTracker, NlosTrackerConfig, ScoredPath, SpatialGrid,
};
pub use prompt::{build_prompt, parse_prediction_response, ParsedValue, PromptKind, PromptRecord};
pub use trajectory::{Observation, StateMethod, StatePrediction, TrackerConfig, Trajectory};

use crate::channel::{compose_channel, ArrayGeometry, ChannelParams, ChannelVector, PathParams};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub user: usize,
    pub pixel: (f64, f64),
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub delta: bool,
    pub los_gain: Complex64,
    pub nlos: Vec<ScoredPath>,
    pub method: StateMethod,
    pub fallback: bool,
}

impl PredictionRecord {
    pub fn channel_params(&self) -> ChannelParams {
        let los = self.delta.then_some(PathParams {
            gain: self.los_gain,
            distance: self.distance,
            azimuth: self.azimuth,
            elevation: self.elevation,
        });
        ChannelParams {
            user: self.user,
            los,
            nlos: self.nlos.iter().map(|s| s.path).collect(),
        }
    }
}

/// Channel implied by the predicted parameters, LoS term gated by `delta`.
pub fn reconstruct_channel(prediction: &PredictionRecord, geom: &ArrayGeometry) -> ChannelVector {
    compose_channel(&prediction.channel_params(), geom)
}

/// `||d||_2^2 + lambda ||d||_1`.
pub fn elastic_loss(delta: &[f64], lambda: f64) -> f64 {
    delta.iter().map(|d| d * d).sum::<f64>() + lambda * delta.iter().map(|d| d.abs()).sum::<f64>()
}

/// `(Re a, Im a, theta, phi, r)` per path, zero-padded to `max_paths` rows.
pub fn flatten_paths(paths: &[PathParams], max_paths: usize) -> Result<Vec<f64>> {
    if paths.len() > max_paths {
        return Err(Error::ShapeMismatch {
            expected: max_paths,
            got: paths.len(),
        });
    }
    let mut out = vec![0.0; 5 * max_paths];
    for (i, p) in paths.iter().enumerate() {
        out[5 * i..5 * i + 5].copy_from_slice(&[
            p.gain.re,
            p.gain.im,
            p.azimuth,
            p.elevation,
            p.distance,
        ]);
    }
    Ok(out)
}

/// Scoring losses for the LoS-gain predictor (over a vector of complex gains,
/// as real/imaginary pairs) and for the NLoS parameter predictor.
pub fn prediction_losses(
    true_gains: &[Complex64],
    predicted_gains: &[Complex64],
    true_nlos: &[PathParams],
    predicted_nlos: &[PathParams],
    max_paths: usize,
    lambda: f64,
) -> Result<(f64, f64)> {
    if true_gains.len() != predicted_gains.len() {
        return Err(Error::ShapeMismatch {
            expected: true_gains.len(),
            got: predicted_gains.len(),
        });
    }
    let dl: Vec<f64> = true_gains
        .iter()
        .zip(predicted_gains)
        .flat_map(|(a, b)| {
            let d = a - b;
            [d.re, d.im]
        })
        .collect();
    let t = flatten_paths(true_nlos, max_paths)?;
    let p = flatten_paths(predicted_nlos, max_paths)?;
    let dn: Vec<f64> = t.iter().zip(&p).map(|(a, b)| a - b).collect();
    Ok((elastic_loss(&dl, lambda), elastic_loss(&dn, lambda)))
}

/// Linear NMSE `||h - h_hat||^2 / ||h||^2`; `None` when `h = 0`.
pub fn nmse_linear(h: &ChannelVector, h_hat: &ChannelVector) -> Option<f64> {
    assert_eq!(h.len(), h_hat.len(), "channel lengths differ");
    let p = h.norm_squared();
    (p > 0.0).then(|| (h - h_hat).norm_squared() / p)
}

/// NMSE in dB; exact predictions give `-inf`.
pub fn nmse(h: &ChannelVector, h_hat: &ChannelVector) -> Option<f64> {
    nmse_linear(h, h_hat).map(|x| 10.0 * x.log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::half_wavelength(8, 8, 28e9)
    }

    fn record(delta: bool, nlos: Vec<ScoredPath>) -> PredictionRecord {
        PredictionRecord {
            user: 0,
            pixel: (0.0, 0.0),
            azimuth: 0.1,
            elevation: 0.0,
            distance: 5.0,
            delta,
            los_gain: Complex64::new(1.0, 0.0),
            nlos,
            method: StateMethod::Kalman,
            fallback: false,
        }
    }

    #[test]
    fn blocked_without_paths_is_zero() {
        assert_eq!(
            reconstruct_channel(&record(false, vec![]), &geom()).norm(),
            0.0
        );
        assert!(reconstruct_channel(&record(true, vec![]), &geom()).norm() > 0.0);
    }

    #[test]
    fn loss_arithmetic() {
        assert_eq!(elastic_loss(&[0.0; 4], 1.0), 0.0);
        assert_eq!(elastic_loss(&[2.0], 1.0), 6.0);
        let g = [Complex64::new(2.0, 0.0)];
        let (l, n) = prediction_losses(&g, &[Complex64::new(0.0, 0.0)], &[], &[], 3, 1.0).unwrap();
        assert_eq!((l, n), (6.0, 0.0));
        assert!(prediction_losses(&g, &[], &[], &[], 3, 1.0).is_err());
        let p = PathParams {
            gain: Complex64::new(1.0, 0.0),
            distance: 1.0,
            azimuth: 0.0,
            elevation: 0.0,
        };
        assert!(prediction_losses(&[], &[], &[p; 4], &[], 3, 1.0).is_err());
    }

    #[test]
    fn nmse_cases() {
        let h = ChannelVector::from_element(4, Complex64::new(1.0, -1.0));
        assert_eq!(nmse(&h, &h), Some(f64::NEG_INFINITY));
        assert_eq!(nmse(&h, &ChannelVector::zeros(4)), Some(0.0));
        let mut e = ChannelVector::zeros(4);
        e[0] = Complex64::new(0.8f64.sqrt(), 0.0); // ||e||^2 = 0.8 = 0.1 * ||h||^2
        assert!((nmse(&h, &(&h + e)).unwrap() + 10.0).abs() < 1e-9);
        assert_eq!(nmse(&ChannelVector::zeros(4), &h), None);
    }
}
