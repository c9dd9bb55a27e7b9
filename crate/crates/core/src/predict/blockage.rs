//! Image-plane blockage rule: a user is predicted blocked when its predicted
//! pixel falls inside an obstacle box that is not behind it.

use crate::scene::{Detection, Target};
use serde::Serialize;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OverlapSet {
    /// `(user, obstacle)` pairs whose predicted pixel lies in the obstacle box.
    pub pairs: Vec<(usize, usize)>,
}

/// Predicted user position in the image with its predicted range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedPoint {
    pub user: usize,
    pub pixel: (f64, f64),
    pub distance: f64,
}

/// `delta = 0` iff some overlapping obstacle has depth `r_j <= r_k`.
/// Non-obstacle detections are ignored.
pub fn predict_blockage(
    points: &[PredictedPoint],
    obstacles: &[Detection],
) -> (Vec<bool>, OverlapSet) {
    let mut overlaps = OverlapSet::default();
    let deltas = points
        .iter()
        .map(|pt| {
            let mut clear = true;
            for d in obstacles {
                let Target::Obstacle(id) = d.target else {
                    continue;
                };
                if d.bbox_contains(pt.pixel) {
                    overlaps.pairs.push((pt.user, id));
                    if pt.distance >= d.depth {
                        clear = false;
                    }
                }
            }
            clear
        })
        .collect();
    (deltas, overlaps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obstacle(depth: f64) -> Detection {
        Detection {
            target: Target::Obstacle(7),
            pixel: (100.0, 100.0),
            bbox: (40.0, 40.0),
            depth,
            visible: true,
        }
    }

    fn point(distance: f64, pixel: (f64, f64)) -> PredictedPoint {
        PredictedPoint {
            user: 3,
            pixel,
            distance,
        }
    }

    #[test]
    fn rule_branches() {
        let obs = [obstacle(5.0)];
        let (d, o) = predict_blockage(&[point(10.0, (110.0, 95.0))], &obs);
        assert_eq!(d, vec![false]);
        assert_eq!(o.pairs, vec![(3, 7)]);
        let (d, _) = predict_blockage(&[point(4.0, (110.0, 95.0))], &obs);
        assert_eq!(d, vec![true]);
        let (d, o) = predict_blockage(&[point(10.0, (200.0, 95.0))], &obs);
        assert_eq!(d, vec![true]);
        assert!(o.pairs.is_empty());
    }
}
