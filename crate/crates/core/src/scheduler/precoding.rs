//! Zero-forcing precoding with an equal power split.

use crate::channel::ChannelVector;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Relative singular-value floor below which a group counts as rank
/// deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Precoded {
    /// Indices (into the input slice) that stayed in the group.
    pub kept: Vec<usize>,
    /// Unit-norm precoder per kept user.
    pub precoders: Vec<ChannelVector>,
    /// `(P / G) |h_k^H w_k|^2 / sigma^2` per kept user.
    pub snr: Vec<f64>,
}

fn full_rank(h: &DMatrix<Complex64>) -> bool {
    let sv = h.singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > RANK_TOLERANCE * max
}

/// Zero-forcing precoders `W = H (H^H H)^-1` with unit-norm columns for the
/// co-scheduled channels. While the group is rank deficient the member with
/// the lowest `priority` (then the highest index) is removed.
pub fn zf_precode_and_snr(
    channels: &[&ChannelVector],
    priority: &[f64],
    power: f64,
    noise: f64,
) -> Precoded {
    assert_eq!(channels.len(), priority.len());
    let mut kept: Vec<usize> = (0..channels.len()).collect();
    loop {
        if kept.is_empty() {
            return Precoded {
                kept,
                precoders: Vec::new(),
                snr: Vec::new(),
            };
        }
        let n = channels[kept[0]].len();
        let h = DMatrix::from_fn(n, kept.len(), |r, c| channels[kept[c]][r]);
        if full_rank(&h) {
            let gram = h.adjoint() * &h;
            if let Some(inv) = gram.try_inverse() {
                let w = &h * inv;
                let g = kept.len() as f64;
                let mut precoders = Vec::with_capacity(kept.len());
                let mut snr = Vec::with_capacity(kept.len());
                for (c, &k) in kept.iter().enumerate() {
                    let col = w.column(c);
                    let wk: ChannelVector = &col / Complex64::new(col.norm(), 0.0);
                    snr.push(power / g * channels[k].dotc(&wk).norm_sqr() / noise);
                    precoders.push(wk);
                }
                return Precoded {
                    kept,
                    precoders,
                    snr,
                };
            }
        }
        let worst = (0..kept.len())
            .min_by(|&a, &b| {
                priority[kept[a]]
                    .total_cmp(&priority[kept[b]])
                    .then(kept[b].cmp(&kept[a]))
            })
            .unwrap();
        kept.remove(worst);
    }
}

/// Received SINR of every group member when the true channels `truth` meet
/// precoders designed elsewhere.
pub fn sinr(
    truth: &[&ChannelVector],
    precoders: &[ChannelVector],
    power: f64,
    noise: f64,
) -> Vec<f64> {
    let g = precoders.len() as f64;
    truth
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let gains: Vec<f64> = precoders
                .iter()
                .map(|w| h.dotc(w).norm_sqr() * power / g)
                .collect();
            let interference: f64 = gains
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, x)| x)
                .sum();
            gains[k] / (interference + noise)
        })
        .collect()
}
