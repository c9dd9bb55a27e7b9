use clap::{Parser, Subcommand};
use preempt_core::harness::{
    load_config, run_scenario, sweep_and_emit, write_rows_csv, PredictorKind, SweepAxis, SweepSpec,
};
use preempt_core::scheduler::Policy;
use preempt_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "preempt",
    version,
    about = "Predictive downlink scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its aggregates as JSON.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long)]
        predictor: Option<PredictorKind>,
        /// Per-slot, per-user rows as CSV.
        #[arg(long)]
        rows: Option<PathBuf>,
        /// JSON-lines decision log.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Sweep one parameter for every policy and write CSV files.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        /// Predictor used by the predictive policy (defaults to the config).
        #[arg(long)]
        predictor: Option<PredictorKind>,
    },
    /// Parse and validate a configuration file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> preempt_core::Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            policy,
            predictor,
            rows,
            events,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(p) = policy {
                cfg.scheduler.policy = p;
            }
            if let Some(m) = predictor {
                cfg.predictor.method = m;
            }
            if events.is_some() {
                cfg.run.event_log = events;
            }
            cfg.validate()?;
            let result = run_scenario(&cfg)?;
            if let Some(path) = rows {
                write_rows_csv(std::fs::File::create(path)?, &result)?;
            }
            let summary = serde_json::json!({
                "policy": result.policy,
                "predictor": result.predictor,
                "seed": result.seed,
                "aggregates": result.aggregates,
                "constraint_violations": result.constraint_violations,
                "identification_accuracy": result.identification_accuracy,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Sweep {
            config,
            axis,
            values,
            reps,
            out,
            predictor,
        } => {
            let cfg = load_config(&config)?;
            let spec = SweepSpec::all_policies(
                axis,
                values,
                reps,
                predictor.unwrap_or(cfg.predictor.method),
            );
            let outputs = sweep_and_emit(&cfg, &spec, &out)?;
            let failed = outputs.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "wrote {} ({} rows, {failed} failed)",
                outputs.raw.display(),
                outputs.rows.len()
            );
            println!("wrote {}", outputs.aggregate.display());
            println!("wrote {}", outputs.events.display());
        }
        Command::Validate { config } => {
            load_config(&config)?;
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
