//! Experiment runner behind the `hga` binary.

pub mod app;
pub mod config;
pub mod output;
pub mod plot;
pub mod run;

pub use config::{parse_config, parse_override, ConfigError, Experiment, ExperimentConfig, Overrides};
pub use output::{read_rows, Row};
pub use plot::{emit_plot, render_svg, Series};
pub use run::run_experiment;
