//! Command-line front end for truncated stochastic approximation experiments.

pub mod commands;
pub mod config;
pub mod plot;
