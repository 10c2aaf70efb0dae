//! Configuration, experiments and sweeps behind the command-line tool.

pub mod config;
pub mod experiment;

pub use config::{validate_config, ExperimentConfig, GridConfig, Preset, RunMode, ScenarioConfig, SweepRow, Validated};
pub use experiment::{
    run_experiment, run_sweep, sweep_gamma, write_report, write_sweep, write_sweep_csv, CrossCheck, Equilibria,
    ExperimentReport, OutputFormat, SweepPoint, XiOptimum,
};
