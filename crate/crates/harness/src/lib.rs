//! Command-line driver for the geostrophic noise lab: TOML configurations, field
//! snapshots, CSV tables and run manifests.

pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;
pub mod snapshot;

pub use cli::{read_manifest, run_cli};
pub use config::RunConfig;
pub use error::{HarnessError, Result};
