//! Experiment orchestration: configuration files, training campaigns,
//! evaluation, baseline sweeps and trigger-topology traces.

pub mod campaign;
pub mod config;
pub mod evaluate;
pub mod sweep;
pub mod trace;
