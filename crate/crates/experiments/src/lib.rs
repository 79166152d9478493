//! Experiment runners behind the `eos` command-line tool.
//!
//! Each experiment resolves an [`ExperimentConfig`], computes a typed result,
//! and renders it as a CSV table (first line `# eos <name> config_sha256=<hex>`)
//! plus one or more SVG plots.

pub mod config;
pub mod error;
pub mod init;
pub mod runs;
pub mod svg;
pub mod table;

pub use config::{ConfigFile, Experiment, ExperimentConfig, Overrides};
pub use error::CliError;
pub use init::init_from_phi_pi;
pub use runs::{render, run_experiment};
