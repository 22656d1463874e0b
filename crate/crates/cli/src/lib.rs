//! Experiment runner for the coherent-set toolkit: configuration parsing,
//! built-in presets, pipeline orchestration and the plain-text output bundle.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;
