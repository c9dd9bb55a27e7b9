//! Configuration, the end-to-end slot loop and parameter sweeps.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{load_config, PredictorKind, ScenarioConfig};
pub use run::{
    aggregate, run_combinations, run_scenario, scenario_seed, write_rows_csv, Aggregates,
    RunResult, SlotRow, Truth,
};
pub use sweep::{
    aggregate_rows, sweep, sweep_and_emit, SweepAxis, SweepOutputs, SweepRow, SweepSpec,
};
