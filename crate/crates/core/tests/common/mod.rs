#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn gray_inverse(mut g: u32) -> u32 {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

/// Symbol error rate of Gray-mapped square 2^bits-QAM over AWGN at
/// per-symbol SNR `snr`, by simulation: random bits are mapped per axis
/// through a Gray code onto PAM levels, noise is added, the nearest level
/// is picked and the demapped bits are compared.
pub fn qam_ser_monte_carlo(bits: u32, snr: f64, symbols: usize, seed: u64) -> f64 {
    let half = bits / 2;
    let levels = 1u32 << half;
    let es = 2.0 * ((levels * levels) as f64 - 1.0) / 3.0;
    let sigma = (es / (2.0 * snr)).sqrt();
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = |idx: u32| 2.0 * idx as f64 - (levels as f64 - 1.0);
    let detect = |r: f64| {
        let idx = ((r + levels as f64 - 1.0) / 2.0).round();
        idx.clamp(0.0, levels as f64 - 1.0) as u32
    };
    let mut errors = 0usize;
    for _ in 0..symbols {
        let word: u32 = rng.gen_range(0..(1u32 << bits));
        let (bi, bq) = (word >> half, word & (levels - 1));
        // the Gray code word sits at the position whose index it encodes
        let (ii, iq) = (gray_inverse(bi), gray_inverse(bq));
        let ri = amp(ii) + noise.sample(&mut rng);
        let rq = amp(iq) + noise.sample(&mut rng);
        let out = (gray(detect(ri)) << half) | gray(detect(rq));
        errors += usize::from(out != word);
    }
    errors as f64 / symbols as f64
}

#[test]
fn gray_code_round_trip() {
    for i in 0..256 {
        assert_eq!(gray_inverse(gray(i)), i);
        if i > 0 {
            assert_eq!((gray(i) ^ gray(i - 1)).count_ones(), 1);
        }
    }
}

/// Minimum total cost over all injections of rows into columns, by
/// exhaustive enumeration (`rows <= cols`).
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == cost.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.min(cost[row][c] + go(cost, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = cost.first().map_or(0, |r| r.len());
    assert!(cost.len() <= cols);
    go(cost, 0, &mut vec![false; cols])
}
