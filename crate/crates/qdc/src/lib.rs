//! Experiment runner for the doubly driven Kerr oscillator: configuration
//! files and presets, the multi-threaded trajectory ensemble, CSV/JSON
//! artifacts and the `qdc` command line.

pub mod config;
pub mod ensemble;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{parse_config, resolve, ConfigErrors, ExperimentConfig, Mode};
pub use qdc_core;
pub use run::{run_experiment, RunError, RunReport};
