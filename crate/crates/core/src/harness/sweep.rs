//! Parameter sweeps: scenarios run in parallel, results collected in a fixed
//! order and written by a single writer.

use super::config::{PredictorKind, ScenarioConfig};
use super::run::{effective_predictor, run_combinations, scenario_seed};
use crate::error::{Error, Result};
use crate::scheduler::Policy;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SerMax,
    Users,
    Velocity,
    ObstacleDensity,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::SerMax => "ser_max",
            SweepAxis::Users => "k",
            SweepAxis::Velocity => "velocity",
            SweepAxis::ObstacleDensity => "obstacle_density",
        }
    }

    /// Copy of `base` with the swept parameter set to `value`. Velocity is
    /// in km/h.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::SerMax => cfg.scheduler.ser_max = value,
            SweepAxis::Users => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::config(
                        "users.count",
                        format!("{value} is not a user count"),
                    ));
                }
                cfg.users.count = value as usize;
            }
            SweepAxis::Velocity => cfg.users.max_speed_kmh = value,
            SweepAxis::ObstacleDensity => cfg.obstacles.density = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ser_max" => Ok(SweepAxis::SerMax),
            "k" | "users" => Ok(SweepAxis::Users),
            "velocity" => Ok(SweepAxis::Velocity),
            "obstacle_density" => Ok(SweepAxis::ObstacleDensity),
            _ => Err(format!("unknown sweep axis `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub repetitions: usize,
    pub combos: Vec<(Policy, PredictorKind)>,
}

impl SweepSpec {
    /// Every policy, with the predictive one using `predictor`.
    pub fn all_policies(
        axis: SweepAxis,
        values: Vec<f64>,
        repetitions: usize,
        predictor: PredictorKind,
    ) -> Self {
        let combos = Policy::ALL.iter().map(|&p| (p, predictor)).collect();
        SweepSpec {
            axis,
            values,
            repetitions,
            combos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub policy: Policy,
    pub predictor: PredictorKind,
    pub seed: u64,
    pub r_total: f64,
    pub mean_nmse_db: Option<f64>,
    pub blockage_accuracy: Option<f64>,
    pub violation_count: usize,
    pub constraint_violations: usize,
    pub error: Option<String>,
}

struct TaskOutput {
    rows: Vec<SweepRow>,
    events: Vec<u8>,
}

fn run_task(base: &ScenarioConfig, spec: &SweepSpec, value: f64, rep: usize) -> TaskOutput {
    let seed = scenario_seed(base.run.seed, rep as u64);
    let mut events = Vec::new();
    let outcome = spec
        .axis
        .apply(base, value)
        .and_then(|cfg| run_combinations(&cfg, seed, &spec.combos, Some(&mut events)));
    let rows = match outcome {
        Ok(results) => results
            .into_iter()
            .map(|r| SweepRow {
                axis_value: value,
                policy: r.policy,
                predictor: r.predictor,
                seed,
                r_total: r.aggregates.r_total,
                mean_nmse_db: r.aggregates.mean_nmse_db,
                blockage_accuracy: r.aggregates.blockage_accuracy,
                violation_count: r.aggregates.violation_count,
                constraint_violations: r.constraint_violations,
                error: None,
            })
            .collect(),
        Err(e) => {
            events.clear();
            spec.combos
                .iter()
                .map(|&(policy, predictor)| SweepRow {
                    axis_value: value,
                    policy,
                    predictor: effective_predictor(policy, predictor),
                    seed,
                    r_total: f64::NAN,
                    mean_nmse_db: None,
                    blockage_accuracy: None,
                    violation_count: 0,
                    constraint_violations: 0,
                    error: Some(e.to_string()),
                })
                .collect()
        }
    };
    TaskOutput { rows, events }
}

fn execute(base: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<TaskOutput>> {
    if spec.values.is_empty() {
        return Err(Error::config("values", "sweep needs at least one value"));
    }
    if spec.repetitions == 0 {
        return Err(Error::config("reps", "sweep needs at least one repetition"));
    }
    let tasks: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    Ok(tasks
        .par_iter()
        .map(|&(v, r)| run_task(base, spec, v, r))
        .collect())
}

/// Raw rows in (value, repetition, combination) order.
pub fn sweep(base: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    Ok(execute(base, spec)?
        .into_iter()
        .flat_map(|t| t.rows)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub axis_value: f64,
    pub policy: Policy,
    pub predictor: PredictorKind,
    pub runs: usize,
    pub r_total_mean: f64,
    pub r_total_std: f64,
    pub mean_nmse_db_mean: Option<f64>,
    pub mean_nmse_db_std: Option<f64>,
    pub blockage_accuracy_mean: Option<f64>,
    pub blockage_accuracy_std: Option<f64>,
    pub violation_count_mean: f64,
    pub violation_count_std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn optional_stats(xs: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let (m, s) = mean_std(&xs);
    (Some(m), Some(s))
}

/// One row per (axis value, policy, predictor) cell over its successful runs,
/// in first-appearance order.
pub fn aggregate_rows(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, Policy, PredictorKind)> = Vec::new();
    for r in rows {
        let key = (r.axis_value, r.policy, r.predictor);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(v, policy, predictor)| {
            let cell: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| {
                    r.axis_value == v
                        && r.policy == policy
                        && r.predictor == predictor
                        && r.error.is_none()
                })
                .collect();
            if cell.is_empty() {
                return None;
            }
            let (r_total_mean, r_total_std) =
                mean_std(&cell.iter().map(|r| r.r_total).collect::<Vec<_>>());
            let (mean_nmse_db_mean, mean_nmse_db_std) =
                optional_stats(cell.iter().filter_map(|r| r.mean_nmse_db).collect());
            let (blockage_accuracy_mean, blockage_accuracy_std) =
                optional_stats(cell.iter().filter_map(|r| r.blockage_accuracy).collect());
            let (violation_count_mean, violation_count_std) = mean_std(
                &cell
                    .iter()
                    .map(|r| r.violation_count as f64)
                    .collect::<Vec<_>>(),
            );
            Some(AggregateRow {
                axis_value: v,
                policy,
                predictor,
                runs: cell.len(),
                r_total_mean,
                r_total_std,
                mean_nmse_db_mean,
                mean_nmse_db_std,
                blockage_accuracy_mean,
                blockage_accuracy_std,
                violation_count_mean,
                violation_count_std,
            })
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis_value",
        "policy",
        "predictor",
        "seed",
        "R_total",
        "mean_NMSE_dB",
        "blockage_accuracy",
        "violation_count",
        "constraint_violations",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            r.policy.as_str().to_string(),
            r.predictor.as_str().to_string(),
            r.seed.to_string(),
            r.r_total.to_string(),
            opt(r.mean_nmse_db),
            opt(r.blockage_accuracy),
            r.violation_count.to_string(),
            r.constraint_violations.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis_value",
        "policy",
        "predictor",
        "runs",
        "R_total_mean",
        "R_total_std",
        "mean_NMSE_dB_mean",
        "mean_NMSE_dB_std",
        "blockage_accuracy_mean",
        "blockage_accuracy_std",
        "violation_count_mean",
        "violation_count_std",
    ])?;
    for r in rows {
        w.write_record([
            r.axis_value.to_string(),
            r.policy.as_str().to_string(),
            r.predictor.as_str().to_string(),
            r.runs.to_string(),
            r.r_total_mean.to_string(),
            r.r_total_std.to_string(),
            opt(r.mean_nmse_db_mean),
            opt(r.mean_nmse_db_std),
            opt(r.blockage_accuracy_mean),
            opt(r.blockage_accuracy_std),
            r.violation_count_mean.to_string(),
            r.violation_count_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutputs {
    pub raw: PathBuf,
    pub aggregate: PathBuf,
    pub events: PathBuf,
    pub rows: Vec<SweepRow>,
}

/// Run the sweep and write `<axis>.csv`, `<axis>_aggregate.csv` and
/// `<axis>_events.jsonl` into `out_dir`.
pub fn sweep_and_emit(
    base: &ScenarioConfig,
    spec: &SweepSpec,
    out_dir: &Path,
) -> Result<SweepOutputs> {
    std::fs::create_dir_all(out_dir)?;
    let outputs = execute(base, spec)?;
    let name = spec.axis.as_str();
    let raw = out_dir.join(format!("{name}.csv"));
    let aggregate = out_dir.join(format!("{name}_aggregate.csv"));
    let events = out_dir.join(format!("{name}_events.jsonl"));

    let mut log = std::io::BufWriter::new(std::fs::File::create(&events)?);
    let mut rows = Vec::new();
    for t in outputs {
        log.write_all(&t.events)?;
        rows.extend(t.rows);
    }
    log.flush()?;
    write_sweep_csv(std::fs::File::create(&raw)?, &rows)?;
    write_aggregate_csv(std::fs::File::create(&aggregate)?, &aggregate_rows(&rows))?;
    Ok(SweepOutputs {
        raw,
        aggregate,
        events,
        rows,
    })
}
