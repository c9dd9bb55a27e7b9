//! Pilot reception, channel estimation, LoS/NLoS decomposition and the
//! SNR -> SER -> MCS machinery.

use crate::channel::{array_response, complex_normal, ArrayGeometry, ChannelVector};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservation {
    pub y: ChannelVector,
    pub pilot: Complex64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub full: ChannelVector,
    pub los: ChannelVector,
    pub nlos: ChannelVector,
    /// LS LoS gain; `None` for users without a visual LoS estimate.
    pub los_gain: Option<Complex64>,
}

/// Large-scale LoS parameters recovered from the camera (or a codebook).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosGeometry {
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
}

/// `y = h s + n`, `n ~ CN(0, noise_var I)`.
pub fn receive_pilot<R: Rng + ?Sized>(
    h: &ChannelVector,
    pilot: Complex64,
    noise_var: f64,
    rng: &mut R,
) -> PilotObservation {
    assert!(noise_var >= 0.0, "noise variance must be non-negative");
    let sd = noise_var.sqrt();
    let y = h.map(|hi| hi * pilot + complex_normal(rng) * sd);
    PilotObservation {
        y,
        pilot,
        noise_var,
    }
}

/// Wiener-shrunk LS estimate `gamma / (1 + gamma) * y s* / |s|^2`, where
/// `prior_snr` is the per-antenna SNR expected for this user. An infinite
/// prior gives plain LS.
pub fn estimate_channel(obs: &PilotObservation, prior_snr: f64) -> ChannelVector {
    let s2 = obs.pilot.norm_sqr();
    assert!(s2 > 0.0, "pilot symbol must be non-zero");
    let shrink = if prior_snr.is_infinite() {
        1.0
    } else {
        prior_snr / (1.0 + prior_snr)
    };
    let scale = obs.pilot.conj() * (shrink / s2);
    obs.y.map(|yi| yi * scale)
}

/// LS fit of the LoS complex gain:
/// `alpha = exp(j 2 pi f_c r / c) a^H y s* / (N_T |s|^2)`.
pub fn ls_los_gain(obs: &PilotObservation, los: &LosGeometry, geom: &ArrayGeometry) -> Complex64 {
    let a = array_response(geom, los.azimuth, los.elevation);
    let n = geom.antennas() as f64;
    let proj = a.dotc(&obs.y) * obs.pilot.conj() / (n * obs.pilot.norm_sqr());
    proj / geom.distance_phase(los.distance)
}

/// Split an estimate into LoS and NLoS parts. The LoS gain is fitted on the
/// estimate itself, so `los + nlos == full` and a pure-LoS estimate leaves a
/// zero NLoS residual.
pub fn decompose(
    full: &ChannelVector,
    los: Option<&LosGeometry>,
    geom: &ArrayGeometry,
) -> ChannelEstimate {
    match los {
        None => ChannelEstimate {
            full: full.clone(),
            los: ChannelVector::zeros(full.len()),
            nlos: full.clone(),
            los_gain: None,
        },
        Some(g) => {
            let pseudo = PilotObservation {
                y: full.clone(),
                pilot: Complex64::new(1.0, 0.0),
                noise_var: 0.0,
            };
            let alpha = ls_los_gain(&pseudo, g, geom);
            let los_vec = array_response(geom, g.azimuth, g.elevation)
                * (alpha * geom.distance_phase(g.distance));
            let nlos = full - &los_vec;
            ChannelEstimate {
                full: full.clone(),
                los: los_vec,
                nlos,
                los_gain: Some(alpha),
            }
        }
    }
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Square M-QAM symbol error rate at per-symbol SNR `snr` for `bits` bits per
/// symbol (`M = 2^bits`). For QPSK this is `1 - (1 - Q(sqrt(snr)))^2`.
pub fn ser_from_snr(snr: f64, bits: u32) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::Domain(format!(
            "SNR must be non-negative, got {snr}"
        )));
    }
    if !matches!(bits, 2 | 4 | 6 | 8) {
        return Err(Error::Domain(format!(
            "unsupported modulation order: {bits} bits"
        )));
    }
    let m = (1u64 << bits) as f64;
    let sqrt_m = m.sqrt();
    let p = 2.0 * (sqrt_m - 1.0) / sqrt_m * q_function((3.0 * snr / (m - 1.0)).sqrt());
    Ok((1.0 - (1.0 - p).powi(2)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct McsEntry {
    #[serde(rename = "m")]
    pub index: usize,
    pub bits: u32,
    #[serde(rename = "spectral_efficiency")]
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

const DEFAULT_TABLE: &str = include_str!("../data/mcs_256qam.csv");

/// Modulation bits fixed by the 256-QAM MCS index ranges.
pub fn expected_bits(index: usize) -> Option<u32> {
    match index {
        0..=4 => Some(2),
        5..=10 => Some(4),
        11..=19 => Some(6),
        20..=27 => Some(8),
        _ => None,
    }
}

impl Default for McsTable {
    fn default() -> Self {
        McsTable::from_csv(DEFAULT_TABLE.as_bytes()).expect("bundled MCS table is valid")
    }
}

impl McsTable {
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        for col in ["m", "bits", "spectral_efficiency"] {
            if !headers.iter().any(|h| h == col) {
                return Err(Error::McsTable(format!("missing column `{col}`")));
            }
        }
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<McsEntry>, _>>()?;
        McsTable::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        McsTable::from_csv(std::fs::File::open(path)?)
    }

    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::McsTable("table is empty".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.index != i {
                return Err(Error::McsTable(format!("row {i} has index {}", e.index)));
            }
            match expected_bits(i) {
                Some(b) if b == e.bits => {}
                Some(b) => {
                    return Err(Error::McsTable(format!(
                        "index {i} must carry {b} bits, found {}",
                        e.bits
                    )));
                }
                None => return Err(Error::McsTable(format!("index {i} outside 0..=27"))),
            }
            if !(e.efficiency >= 0.0) || !e.efficiency.is_finite() {
                return Err(Error::McsTable(format!("index {i} has invalid efficiency")));
            }
            if i > 0 && e.efficiency < entries[i - 1].efficiency {
                return Err(Error::McsTable(format!(
                    "efficiency decreases at index {i}"
                )));
            }
        }
        Ok(McsTable { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_index(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn bits(&self, m: usize) -> u32 {
        self.entries[m].bits
    }

    pub fn efficiency(&self, m: usize) -> f64 {
        self.entries[m].efficiency
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }
}

/// Minimum RB count meeting `rate_min` bits per slot at MCS `m`; `None` when
/// the MCS carries no bits.
pub fn min_rb_count(
    rate_min: f64,
    m: usize,
    table: &McsTable,
    n_re: usize,
    n_sdm: usize,
) -> Option<usize> {
    let per_rb = table.efficiency(m) * n_re as f64 * n_sdm as f64;
    if per_rb <= 0.0 {
        return None;
    }
    if rate_min <= 0.0 {
        return Some(0);
    }
    Some(((rate_min / per_rb) - 1e-9).ceil().max(0.0) as usize)
}
