//! Pipeline driver for the `qa-forge` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;
