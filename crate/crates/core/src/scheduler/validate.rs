//! Constraint checks on a finished decision, written against the decision's
//! public fields only.

use super::{ScheduleDecision, SchedulerConfig};
use crate::estimation::{min_rb_count, ser_from_snr, McsTable};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// Admitted user below its minimum RB count.
    RateGuarantee {
        user: usize,
        rbs: usize,
        required: usize,
    },
    /// Too many users on one RB.
    GroupSize { rb: usize, size: usize, cap: usize },
    /// Served user without an MCS, or MCS set for an unserved user.
    McsAssignment { user: usize },
    /// Decision-time SER above target.
    DecisionSer { user: usize, rb: usize, ser: f64 },
    /// Precoder column not unit norm.
    PrecoderNorm { rb: usize, user: usize },
    /// Same user listed twice on one RB.
    Duplicate { rb: usize, user: usize },
}

pub fn validate_decision(
    d: &ScheduleDecision,
    cfg: &SchedulerConfig,
    table: &McsTable,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let k_total = d.mcs.len();
    let cap = cfg.max_group.min(cfg.antennas);
    let mut counts = vec![0usize; k_total];
    for (b, g) in d.groups.iter().enumerate() {
        if g.users.len() > cap {
            out.push(Violation::GroupSize {
                rb: b,
                size: g.users.len(),
                cap,
            });
        }
        for (i, &k) in g.users.iter().enumerate() {
            if g.users[..i].contains(&k) {
                out.push(Violation::Duplicate { rb: b, user: k });
            }
            counts[k] += 1;
            if let Some(w) = g.precoders.get(i) {
                if (w.norm() - 1.0).abs() > 1e-9 {
                    out.push(Violation::PrecoderNorm { rb: b, user: k });
                }
            }
            if let (Some(m), Some(&snr)) = (d.mcs[k], g.snr.get(i)) {
                let ser = ser_from_snr(snr.max(0.0), table.bits(m)).unwrap_or(1.0);
                if ser > cfg.ser_max {
                    out.push(Violation::DecisionSer {
                        user: k,
                        rb: b,
                        ser,
                    });
                }
            }
        }
    }
    for k in 0..k_total {
        let served = counts[k] > 0;
        if served != d.mcs[k].is_some() {
            out.push(Violation::McsAssignment { user: k });
        }
        if d.admitted[k] {
            let required = d.mcs[k]
                .and_then(|m| min_rb_count(cfg.rate_min, m, table, cfg.res_per_rb, cfg.streams))
                .unwrap_or(usize::MAX);
            if counts[k] < required {
                out.push(Violation::RateGuarantee {
                    user: k,
                    rbs: counts[k],
                    required,
                });
            }
        }
    }
    out
}
