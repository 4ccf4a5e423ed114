//! Command-line entry points, the workbench HTTP service and an oracle
//! model adapter.

pub mod adapter;
pub mod cli;
pub mod commands;
pub mod config;
pub mod failure;
pub mod service;

pub use cli::main_with;
pub use failure::{Failure, EXIT_BACKEND, EXIT_CONFIG};
