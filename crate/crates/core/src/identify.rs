//! Matching camera detections to BS user IDs, and the codebook fallback used
//! for users the camera cannot see.

use crate::channel::{array_response, ArrayGeometry, ChannelVector};
use nalgebra::DMatrix;

pub const COST_EPSILON: f64 = 1e-12;
const DUMMY_FACTOR: f64 = 10.0;

/// `R[i][k] = |h_k^H f_i|` for detection beams `f_i` and estimates `h_k`.
pub fn correlation_matrix(beams: &[ChannelVector], estimates: &[ChannelVector]) -> DMatrix<f64> {
    DMatrix::from_fn(beams.len(), estimates.len(), |i, k| {
        estimates[k].dotc(&beams[i]).norm()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// User matched to each detection; `None` marks an unidentified detection.
    pub user_of: Vec<Option<usize>>,
    /// Sum of `1 / (R + eps)` over identified detections.
    pub total_cost: f64,
}

/// Optimal one-to-one matching of detections (rows) to users (columns) under
/// cost `1 / (R + eps)`. All-zero rows are left unidentified; surplus rows
/// fall onto dummy columns priced at ten times the largest real cost.
pub fn hungarian_match(r: &DMatrix<f64>) -> Assignment {
    let (rows, cols) = r.shape();
    let live: Vec<usize> = (0..rows)
        .filter(|&i| r.row(i).iter().any(|&x| x != 0.0))
        .collect();
    let mut user_of = vec![None; rows];
    if live.is_empty() || cols == 0 {
        return Assignment {
            user_of,
            total_cost: 0.0,
        };
    }
    let cost = DMatrix::from_fn(live.len(), cols, |i, k| {
        1.0 / (r[(live[i], k)] + COST_EPSILON)
    });
    let (assign, total) = min_cost_assignment(&cost);
    for (i, k) in assign.into_iter().enumerate() {
        user_of[live[i]] = k;
    }
    Assignment {
        user_of,
        total_cost: total,
    }
}

/// Minimum-cost assignment of every row of `cost` to a distinct column.
/// When rows outnumber columns the matrix is padded with dummy columns and
/// the rows that land on them map to `None` (their cost is not counted).
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> (Vec<Option<usize>>, f64) {
    let (n, m) = cost.shape();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let max_cost = cost
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(0.0_f64, f64::max);
    let dummy = if max_cost > 0.0 {
        max_cost * DUMMY_FACTOR
    } else {
        1.0
    };
    let width = m.max(n);
    let at = |i: usize, j: usize| if j < m { cost[(i, j)] } else { dummy };

    // Shortest augmenting path with potentials (1-based, column 0 is virtual).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; width + 1];
    let mut p = vec![0usize; width + 1];
    let mut way = vec![0usize; width + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; width + 1];
        let mut used = vec![false; width + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=width {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=width {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; n];
    let mut total = 0.0;
    for j in 1..=width {
        if p[j] != 0 && j <= m {
            out[p[j] - 1] = Some(j - 1);
            total += cost[(p[j] - 1, j - 1)];
        }
    }
    (out, total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub vector: ChannelVector,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub codewords: Vec<Codeword>,
}

impl BeamCodebook {
    /// Unit-norm steering codewords at the given `(azimuth, elevation,
    /// nominal distance)` triples.
    pub fn from_directions(geom: &ArrayGeometry, dirs: &[(f64, f64, f64)]) -> Self {
        let scale = 1.0 / (geom.antennas() as f64).sqrt();
        let codewords = dirs
            .iter()
            .map(|&(azimuth, elevation, distance)| Codeword {
                vector: array_response(geom, azimuth, elevation)
                    * num_complex::Complex64::new(scale, 0.0),
                azimuth,
                elevation,
                distance,
            })
            .collect();
        BeamCodebook { codewords }
    }

    /// DFT-style grid uniform in the spatial frequencies
    /// `u = sin(az) cos(el)` in `[-u_max, u_max]` and `v = sin(el)` in
    /// `[-v_max, v_max]`. Grid points outside the visible region are skipped.
    /// `distance` maps a direction to its nominal range.
    pub fn dft_grid(
        geom: &ArrayGeometry,
        nu: usize,
        nv: usize,
        u_max: f64,
        v_max: f64,
        distance: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let grid = |n: usize, lim: f64, i: usize| {
            if n == 1 {
                0.0
            } else {
                -lim + 2.0 * lim * i as f64 / (n - 1) as f64
            }
        };
        let mut dirs = Vec::with_capacity(nu * nv);
        for iu in 0..nu {
            for iv in 0..nv {
                let (u, v) = (grid(nu, u_max, iu), grid(nv, v_max, iv));
                if u * u + v * v > 1.0 {
                    continue;
                }
                let el = v.asin();
                let az = (u / el.cos()).clamp(-1.0, 1.0).asin();
                dirs.push((az, el, distance(az, el)));
            }
        }
        BeamCodebook::from_directions(geom, &dirs)
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }
}

/// Codeword maximising `|c^H y|^2`; ties go to the lowest index.
pub fn codebook_fallback<'a>(codebook: &'a BeamCodebook, y: &ChannelVector) -> &'a Codeword {
    assert!(!codebook.is_empty(), "codebook must not be empty");
    let mut best = 0;
    let mut best_power = f64::NEG_INFINITY;
    for (i, c) in codebook.codewords.iter().enumerate() {
        let power = c.vector.dotc(y).norm_sqr();
        if power > best_power {
            best = i;
            best_power = power;
        }
    }
    &codebook.codewords[best]
}
