//! Command-line front end and stage orchestration for `termforge-core`.
//!
//! A pipeline run is driven by one JSON config. Every stage writes its
//! outputs into `out_dir/<stage>/` together with a `manifest.json` that
//! records the parameters, the stage seed and content hashes of all inputs
//! and outputs.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod stages;
pub mod toy;
