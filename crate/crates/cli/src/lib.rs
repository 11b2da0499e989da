//! Command-line front end: configuration files, subcommands and sweeps.

pub mod commands;
pub mod config;
pub mod material;
pub mod range;
pub mod sweep;

pub use commands::{exit_code_for, run_command, Command, Flags, Outcome};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use material::{parse_material, parse_material_str, Material};
pub use range::parse_range;
pub use sweep::{run_sweep, PointStatus, SweepOptions, SweepOutcome};
