//! Configuration, file formats and the subcommand drivers behind the binary.

pub mod config;
pub mod run;
pub mod snapshot;
