//! Scenario files, CSV/JSON tables and the `qrcell` command line on top of
//! `qrcell-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;

pub use config::Config;
