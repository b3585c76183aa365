//! Library side of the `roml` command: config files, run orchestration,
//! CSV/JSON outputs and SVG charts.

pub mod config;
pub mod output;
pub mod plot;
pub mod runner;
