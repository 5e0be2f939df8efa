//! Configuration, experiment runners and result tables for the `xpdmimo`
//! command-line tool.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{load_config, ConfigError, ScenarioConfig};
pub use experiments::{run_experiment, Run};
pub use output::{Cell, Table};
