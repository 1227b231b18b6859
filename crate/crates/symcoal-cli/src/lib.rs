//! Batch front end: config parsing, command dispatch, replicate
//! scheduling and result files. The binary in main.rs is a thin clap
//! wrapper around [`config::RunConfig`] and [`runner::run`].

pub mod config;
pub mod outputs;
pub mod runner;
