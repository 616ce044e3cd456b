//! Command-line front end: configs, commands, charts and the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;
pub mod verify;
