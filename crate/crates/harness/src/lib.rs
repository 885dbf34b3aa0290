//! Experiment drivers, configuration and CLI for the `fdswipt-core` library.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod selftest;
