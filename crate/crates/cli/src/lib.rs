//! Command line and HTTP front ends for `doodle-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod job;
pub mod service;

pub use cli::run_cli;
