//! Experiment orchestration for the `pie-lab` command line tool.

pub mod channel_file;
pub mod config;
pub mod experiments;

pub use config::ExperimentConfig;
pub use experiments::{run_experiment, run_with_workers};

/// Environment variable overriding the config seed.
pub const SEED_ENV: &str = "PIE_LAB_SEED";
