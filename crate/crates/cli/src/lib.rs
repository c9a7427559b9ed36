//! `swsfno`: synthetic data, HUX baselines, SFNO training and evaluation,
//! benchmarking and slice rendering from one binary.

pub mod args;
pub mod commands;
pub mod mem;
pub mod render;

pub use args::{Cli, Command};
pub use commands::run;
