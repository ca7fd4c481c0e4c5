//! Host-side tooling for the shef core: configuration, trace and scenario
//! files, an end-to-end scenario runner, cost-model calibration, parameter
//! sweeps and the `shef` command line.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod params;
pub mod presets;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod text;
pub mod trace;
