//! Command-line driver: configuration and subcommands.

pub mod commands;
pub mod config;
