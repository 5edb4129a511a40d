//! Closed-loop harness: configuration, simulation, sweeps, CSV and the
//! interactive message protocol.

mod closed_loop;
mod config;
mod csv_io;
pub mod protocol;
mod sweep;

pub use closed_loop::{run_simulation, SimError, SimRecord, Simulation, Stage, StageObserver};
pub use config::{load_config, ConfigError, Mode, SimConfig};
pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to, CSV_HEADER};
pub use sweep::{
    circular_local_maxima, oracle_sweep, orientation_distance_deg, steady_state_performance, sweep_grid, SweepResult,
    SWEEP_REVOLUTIONS,
};
