//! Command-line front end for SkiMap: frame-log replay, queries, 2D export,
//! benchmarks and synthetic scene generation.

pub mod bench;
pub mod build;
pub mod cli;
pub mod config;
pub mod error;
pub mod framelog;
pub mod grid2d;
pub mod query;
pub mod scenes;

pub use config::RunConfig;
pub use error::CliError;
