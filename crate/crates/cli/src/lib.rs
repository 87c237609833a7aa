//! Harness library: run-file schema, experiment drivers, reproducibility
//! manifests, and the acceptance battery behind the `kickwave` binary.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod out;
