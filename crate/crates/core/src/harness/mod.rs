//! Experiment runner, CSV output, objective surfaces, benchmarks and the CLI.

mod bench;
mod cli;
mod csv;
mod experiment;
mod surface;

pub use bench::{bench, bench_csv, fitted_exponent, loglog_slope, BenchKind, BenchRow};
pub use cli::cli_main;
pub use csv::{csv_header, emit_csv, parse_csv, to_csv, write_csv};
pub use experiment::{
    dp_policy, run_experiment, run_scaling_experiment, Estimator, ExperimentConfig, InitialState,
    RunRecord, RunRow, ScalingRow, SystemId,
};
pub use surface::{emit_objective_surface, sphere_point, surface_csv, surface_max, SurfaceRow};
