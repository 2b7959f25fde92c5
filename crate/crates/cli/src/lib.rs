//! Experiment harness for the `fedsel` binary: config files, presets, run
//! and sweep execution, per-run CSV output and summaries.

pub mod config;
pub mod harness;
pub mod output;
pub mod presets;
pub mod summary;
