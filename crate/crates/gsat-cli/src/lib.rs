//! File formats and run plumbing around `gsat-core`: dataset manifests,
//! the binary parameter format, and run configuration. The `gsat` binary
//! wires these into the `train` / `eval` / `attack` / `flops` / `sweep`
//! commands.

pub mod config;
pub mod dataset;
pub mod params;
