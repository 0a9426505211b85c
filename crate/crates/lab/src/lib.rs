//! Experiment runner for `turnpike-core`.

pub mod commands;
pub mod config;
pub mod oracle;
pub mod output;
pub mod plot;
