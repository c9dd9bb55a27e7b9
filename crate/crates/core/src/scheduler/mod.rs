//! Per-slot RB and MCS allocation with PF priority, zero-forcing groups and
//! evaluation against the true channels.

pub mod precoding;
pub mod validate;

pub use precoding::{sinr, zf_precode_and_snr, Precoded};
pub use validate::{validate_decision, Violation};

use crate::channel::ChannelVector;
use crate::estimation::{min_rb_count, ser_from_snr, McsTable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Preemptive,
    PfReactive,
    RoundRobin,
    MaxSnr,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Preemptive,
        Policy::PfReactive,
        Policy::RoundRobin,
        Policy::MaxSnr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Preemptive => "preemptive",
            Policy::PfReactive => "pf_reactive",
            Policy::RoundRobin => "round_robin",
            Policy::MaxSnr => "max_snr",
        }
    }

    /// Whether the policy decides on predicted rather than stale channels.
    pub fn is_predictive(self) -> bool {
        self == Policy::Preemptive
    }
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub rb_total: usize,
    pub max_group: usize,
    pub antennas: usize,
    pub ser_max: f64,
    /// Minimum rate per user in bits per slot.
    pub rate_min: f64,
    pub res_per_rb: usize,
    pub symbols_per_slot: i32,
    pub streams: usize,
    /// Transmit power and noise power in the same linear unit.
    pub tx_power: f64,
    pub noise_power: f64,
}

impl SchedulerConfig {
    /// Users that may share one RB: `min(N_T, G_max)`.
    pub fn group_cap(&self) -> usize {
        self.max_group.min(self.antennas).max(1)
    }
}

/// `r_hat / R_bar`.
pub fn pf_metric(predicted_rate: f64, average_rate: f64) -> f64 {
    predicted_rate / average_rate
}

/// EMA update of the served-rate average, floored to keep PF finite.
pub fn update_average(average: f64, realized: f64, alpha: f64, floor: f64) -> f64 {
    ((1.0 - alpha) * average + alpha * realized).max(floor)
}

/// Largest MCS whose SER at `snr` stays within `ser_max`; `(0, false)` when
/// none does.
pub fn select_mcs(snr: f64, ser_max: f64, table: &McsTable) -> (usize, bool) {
    let snr = snr.max(0.0);
    for m in (0..table.len()).rev() {
        if ser_from_snr(snr, table.bits(m))
            .map(|s| s <= ser_max)
            .unwrap_or(false)
        {
            return (m, true);
        }
    }
    (0, false)
}

/// Expected bits carried by one RB: `(1 - SER)^N_s f(m) N_RE N_SDM`.
pub fn rb_bits(snr: f64, m: usize, table: &McsTable, cfg: &SchedulerConfig) -> f64 {
    let ser = ser_from_snr(snr.max(0.0), table.bits(m)).unwrap_or(1.0);
    (1.0 - ser).powi(cfg.symbols_per_slot)
        * table.efficiency(m)
        * (cfg.res_per_rb * cfg.streams) as f64
}

/// Per-user quantities the RB fill works from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserMetrics {
    /// Nominal SNR `(P / G_max) ||h||^2 / sigma^2`.
    pub snr: Vec<f64>,
    /// MCS at the nominal SNR, `None` when no MCS meets the SER target.
    pub mcs: Vec<Option<usize>>,
    pub pf: Vec<f64>,
    pub min_rbs: Vec<Option<usize>>,
}

pub fn user_metrics(
    channels: &[ChannelVector],
    averages: &[f64],
    cfg: &SchedulerConfig,
    table: &McsTable,
) -> UserMetrics {
    let share = cfg.tx_power / cfg.group_cap() as f64;
    let mut m = UserMetrics {
        snr: vec![],
        mcs: vec![],
        pf: vec![],
        min_rbs: vec![],
    };
    for (h, &avg) in channels.iter().zip(averages) {
        let snr = share * h.norm_squared() / cfg.noise_power;
        let (mcs, ok) = select_mcs(snr, cfg.ser_max, table);
        let rate = if ok {
            rb_bits(snr, mcs, table, cfg)
        } else {
            0.0
        };
        m.snr.push(snr);
        m.mcs.push(ok.then_some(mcs));
        m.pf.push(pf_metric(rate, avg));
        m.min_rbs.push(if ok {
            min_rb_count(cfg.rate_min, mcs, table, cfg.res_per_rb, cfg.streams)
        } else {
            None
        });
    }
    m
}

/// Users ordered by descending key, ties by ascending index.
fn ranked(keys: &[f64], eligible: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).filter(|&k| eligible(k)).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx
}

/// PF admission: feasible users in PF order, dropping the lowest until the
/// summed minimum demand fits `B * cap`. A demand above `B` never fits.
pub fn admit(metrics: &UserMetrics, cfg: &SchedulerConfig) -> Vec<bool> {
    let mut order = ranked(&metrics.pf, |k| {
        metrics.min_rbs[k].is_some_and(|n| n <= cfg.rb_total)
    });
    let capacity = cfg.rb_total * cfg.group_cap();
    while order
        .iter()
        .map(|&k| metrics.min_rbs[k].unwrap())
        .sum::<usize>()
        > capacity
    {
        order.pop();
    }
    let mut admitted = vec![false; metrics.pf.len()];
    for k in order {
        admitted[k] = true;
    }
    admitted
}

/// RB membership lists (one per RB) for the policy.
pub fn fill_rbs(
    policy: Policy,
    metrics: &UserMetrics,
    cfg: &SchedulerConfig,
    slot: usize,
) -> Vec<Vec<usize>> {
    let b_total = cfg.rb_total;
    let cap = cfg.group_cap();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); b_total];
    let feasible = |k: usize| metrics.mcs[k].is_some();
    match policy {
        Policy::Preemptive | Policy::PfReactive => {
            let admitted = admit(metrics, cfg);
            let order = ranked(&metrics.pf, |k| admitted[k]);
            for &k in &order {
                let need = metrics.min_rbs[k].unwrap();
                // least-loaded RBs first, lowest index on ties
                let mut rbs: Vec<usize> = (0..b_total).filter(|&b| groups[b].len() < cap).collect();
                rbs.sort_by_key(|&b| (groups[b].len(), b));
                for &b in rbs.iter().take(need) {
                    groups[b].push(k);
                }
            }
            for k in ranked(&metrics.pf, feasible) {
                for g in groups.iter_mut() {
                    if g.len() < cap && !g.contains(&k) {
                        g.push(k);
                    }
                }
            }
        }
        Policy::RoundRobin => {
            let users: Vec<usize> = (0..metrics.pf.len()).filter(|&k| feasible(k)).collect();
            if users.is_empty() {
                return groups;
            }
            let n = users.len();
            let mut next = slot % n;
            for g in groups.iter_mut() {
                for _ in 0..cap.min(n) {
                    g.push(users[next]);
                    next = (next + 1) % n;
                }
            }
        }
        Policy::MaxSnr => {
            for k in ranked(&metrics.snr, feasible) {
                for g in groups.iter_mut() {
                    if g.len() < cap {
                        g.push(k);
                    }
                }
            }
        }
    }
    for g in groups.iter_mut() {
        g.sort_unstable();
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RbGroup {
    pub users: Vec<usize>,
    #[serde(skip)]
    pub precoders: Vec<ChannelVector>,
    /// Decision-time post-precoding SNR per member.
    pub snr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleDecision {
    pub policy: Policy,
    pub groups: Vec<RbGroup>,
    /// One MCS per served user.
    pub mcs: Vec<Option<usize>>,
    pub pf: Vec<f64>,
    /// Minimum RB demand at the assigned MCS.
    pub min_rbs: Vec<Option<usize>>,
    /// Served users whose allocation meets their rate guarantee.
    pub admitted: Vec<bool>,
}

impl ScheduleDecision {
    pub fn users(&self) -> usize {
        self.mcs.len()
    }

    pub fn rb_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.users()];
        for g in &self.groups {
            for &k in &g.users {
                c[k] += 1;
            }
        }
        c
    }

    /// Binary `B x K` matrix `x_b(k)`.
    pub fn allocation_matrix(&self) -> Vec<Vec<bool>> {
        self.groups
            .iter()
            .map(|g| (0..self.users()).map(|k| g.users.contains(&k)).collect())
            .collect()
    }
}

fn precode_groups(
    groups: &[Vec<usize>],
    channels: &[ChannelVector],
    pf: &[f64],
    cfg: &SchedulerConfig,
) -> Vec<RbGroup> {
    let mut cache: BTreeMap<Vec<usize>, RbGroup> = BTreeMap::new();
    groups
        .iter()
        .map(|users| {
            cache
                .entry(users.clone())
                .or_insert_with(|| {
                    let hs: Vec<&ChannelVector> = users.iter().map(|&k| &channels[k]).collect();
                    let pr: Vec<f64> = users.iter().map(|&k| pf[k]).collect();
                    let p = zf_precode_and_snr(&hs, &pr, cfg.tx_power, cfg.noise_power);
                    RbGroup {
                        users: p.kept.iter().map(|&i| users[i]).collect(),
                        precoders: p.precoders,
                        snr: p.snr,
                    }
                })
                .clone()
        })
        .collect()
}

/// Full decision: nominal metrics, policy fill, per-RB zero forcing, MCS on
/// the worst decision-time SNR of each user. Users left without a feasible
/// MCS are removed and the affected groups re-precoded until stable.
pub fn schedule(
    channels: &[ChannelVector],
    averages: &[f64],
    policy: Policy,
    cfg: &SchedulerConfig,
    table: &McsTable,
    slot: usize,
) -> ScheduleDecision {
    assert_eq!(channels.len(), averages.len());
    let k_total = channels.len();
    let metrics = user_metrics(channels, averages, cfg, table);
    let mut membership = fill_rbs(policy, &metrics, cfg, slot);
    loop {
        let groups = precode_groups(&membership, channels, &metrics.pf, cfg);
        let mut worst = vec![f64::INFINITY; k_total];
        let mut served = vec![false; k_total];
        for g in &groups {
            for (i, &k) in g.users.iter().enumerate() {
                worst[k] = worst[k].min(g.snr[i]);
                served[k] = true;
            }
        }
        let mut mcs = vec![None; k_total];
        let mut infeasible = Vec::new();
        for k in 0..k_total {
            if served[k] {
                match select_mcs(worst[k], cfg.ser_max, table) {
                    (m, true) => mcs[k] = Some(m),
                    _ => infeasible.push(k),
                }
            }
        }
        if infeasible.is_empty() {
            let counts: Vec<usize> = {
                let mut c = vec![0; k_total];
                groups
                    .iter()
                    .flat_map(|g| &g.users)
                    .for_each(|&k| c[k] += 1);
                c
            };
            let min_rbs: Vec<Option<usize>> = mcs
                .iter()
                .map(|m| {
                    m.and_then(|m| {
                        min_rb_count(cfg.rate_min, m, table, cfg.res_per_rb, cfg.streams)
                    })
                })
                .collect();
            let admitted = (0..k_total)
                .map(|k| min_rbs[k].is_some_and(|n| served[k] && counts[k] >= n))
                .collect();
            return ScheduleDecision {
                policy,
                groups,
                mcs,
                pf: metrics.pf,
                min_rbs,
                admitted,
            };
        }
        // members dropped by the rank check stay dropped
        for (g, pre) in membership.iter_mut().zip(&groups) {
            g.retain(|k| pre.users.contains(k) && !infeasible.contains(k));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub bits: Vec<f64>,
    pub total: f64,
    /// Worst realized SER over the user's RBs (0 for unserved users).
    pub ser: Vec<f64>,
    pub violation: Vec<bool>,
}

/// Relative slack on the SER target when flagging violations.
pub const SER_TOLERANCE: f64 = 1e-9;

/// Realized bits with the true channels and the decision's precoders,
/// including residual inter-user interference.
pub fn realized_throughput(
    decision: &ScheduleDecision,
    truth: &[ChannelVector],
    cfg: &SchedulerConfig,
    table: &McsTable,
) -> ThroughputReport {
    let k_total = decision.users();
    let mut bits = vec![0.0; k_total];
    let mut ser = vec![0.0_f64; k_total];
    for g in &decision.groups {
        if g.users.is_empty() {
            continue;
        }
        let hs: Vec<&ChannelVector> = g.users.iter().map(|&k| &truth[k]).collect();
        let s = sinr(&hs, &g.precoders, cfg.tx_power, cfg.noise_power);
        for (i, &k) in g.users.iter().enumerate() {
            let m = decision.mcs[k].expect("served user has an MCS");
            let e = ser_from_snr(s[i].max(0.0), table.bits(m)).unwrap_or(1.0);
            ser[k] = ser[k].max(e);
            bits[k] += rb_bits(s[i], m, table, cfg);
        }
    }
    let violation = ser
        .iter()
        .map(|&e| e > cfg.ser_max * (1.0 + SER_TOLERANCE))
        .collect();
    ThroughputReport {
        total: bits.iter().sum(),
        bits,
        ser,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rb_total: usize, max_group: usize) -> SchedulerConfig {
        SchedulerConfig {
            rb_total,
            max_group,
            antennas: 64,
            ser_max: 0.1,
            rate_min: 0.0,
            res_per_rb: 168,
            symbols_per_slot: 14,
            streams: 1,
            tx_power: 1.0,
            noise_power: 1.0,
        }
    }

    fn metrics(pf: &[f64], min_rbs: &[usize]) -> UserMetrics {
        UserMetrics {
            snr: pf.to_vec(),
            mcs: vec![Some(27); pf.len()],
            pf: pf.to_vec(),
            min_rbs: min_rbs.iter().map(|&n| Some(n)).collect(),
        }
    }

    fn counts(groups: &[Vec<usize>], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        groups.iter().flatten().for_each(|&u| c[u] += 1);
        c
    }

    #[test]
    fn pf_basics() {
        assert!(pf_metric(2.0, 1.0) > pf_metric(1.0, 1.0));
        assert_eq!(pf_metric(3.5, 3.5), 1.0);
        assert_eq!(update_average(10.0, 0.0, 0.1, 1.0), 9.0);
        assert_eq!(update_average(1.0, 0.0, 0.1, 1.0), 1.0);
    }

    #[test]
    fn mcs_edges() {
        let t = McsTable::default();
        assert_eq!(select_mcs(1e12, 0.1, &t), (27, true));
        assert_eq!(select_mcs(0.0, 0.5, &t), (0, false));
        let mut prev = 0;
        for i in 0..=300 {
            let snr = 10f64.powf(i as f64 / 100.0);
            let (m, _) = select_mcs(snr, 0.1, &t);
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn per_rb_bits_at_zero_ser() {
        let t = McsTable::new(vec![crate::estimation::McsEntry {
            index: 0,
            bits: 2,
            efficiency: 2.0,
        }])
        .unwrap();
        assert!((rb_bits(1e12, 0, &t, &cfg(1, 1)) - 336.0).abs() < 1e-9);
    }

    #[test]
    fn single_user_takes_everything() {
        let g = fill_rbs(Policy::Preemptive, &metrics(&[1.0], &[2]), &cfg(4, 1), 0);
        assert_eq!(counts(&g, 1), vec![4]);
    }

    #[test]
    fn round_robin_equal_shares() {
        let g = fill_rbs(
            Policy::RoundRobin,
            &metrics(&[5.0, 1.0], &[0, 0]),
            &cfg(4, 1),
            0,
        );
        assert_eq!(counts(&g, 2), vec![2, 2]);
        let g = fill_rbs(
            Policy::RoundRobin,
            &metrics(&[1.0; 3], &[0; 3]),
            &cfg(70, 1),
            7,
        );
        let c = counts(&g, 3);
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }

    #[test]
    fn pf_counts_follow_priority() {
        let g = fill_rbs(
            Policy::PfReactive,
            &metrics(&[3.0, 2.0, 1.0], &[1, 1, 1]),
            &cfg(6, 1),
            0,
        );
        let c = counts(&g, 3);
        assert!(c[0] >= c[1] && c[1] >= c[2] && c[2] >= 1, "{c:?}");
        assert_eq!(c.iter().sum::<usize>(), 6);
    }

    #[test]
    fn admission_drops_lowest_pf() {
        let m = metrics(&[3.0, 2.0, 1.0], &[3, 3, 3]);
        assert_eq!(admit(&m, &cfg(6, 1)), vec![true, true, false]);
    }

    #[test]
    fn max_snr_greedy() {
        let g = fill_rbs(
            Policy::MaxSnr,
            &metrics(&[1.0, 9.0, 4.0], &[0; 3]),
            &cfg(5, 2),
            0,
        );
        assert_eq!(counts(&g, 3), vec![0, 5, 5]);
    }
}
