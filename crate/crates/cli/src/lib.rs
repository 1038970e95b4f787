//! Scenario runner for the Λ-system photon-echo simulator: configuration
//! schema, run execution, artifact writing, and sweeps. The `simulate`
//! binary is a thin argument-parsing layer over this library.

pub mod config;
pub mod runner;

pub use config::{ConfigError, RunConfig};
pub use runner::{execute, run_to_dir, sweep_to_dir, RunError, RunReport};
