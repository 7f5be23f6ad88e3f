//! Configuration files, binary snapshots, CSV output and subcommand runs.

pub mod config;
pub mod csv;
pub mod run;
pub mod snapshot;
