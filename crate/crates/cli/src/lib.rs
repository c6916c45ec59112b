//! Experiment runner for the nuclear-spin reservoir simulator: strict JSON
//! configs, versioned CSV outputs and the `simulate` / `benchmark` /
//! `report` commands.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
