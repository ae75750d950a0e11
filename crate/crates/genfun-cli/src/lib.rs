//! Scenario runner behind the `genfun` binary.

pub mod commands;
pub mod config;
pub mod emit;
pub mod runner;
pub mod sampled_csv;
