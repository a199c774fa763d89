//! Evaluation, sweeps, statistics and result files.

pub mod config;
pub mod eval;
pub mod io;
pub mod sweep;

pub use config::{ExperimentConfig, RawConfig};
pub use eval::{evaluate, run_episode, EvalResult, EvalSpec};
pub use io::{load_agent, read_results_csv, results_csv, save_agent, write_results_csv};
pub use sweep::{
    cvar_statistic, default_axis_values, default_grid, sweep_attack_magnitude, sweep_params_grid, Axis, AxisValue, Cell,
    Cvar, SweepResult,
};
