//! Library surface of the `aanet` command-line harness: configuration,
//! dataset loading/generation, plotting, and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod idx;
pub mod plot;
pub mod synthetic;
