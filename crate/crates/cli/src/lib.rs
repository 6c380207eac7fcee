//! Command implementations behind the `startdet` binary.
//!
//! The binary is a thin argument parser; everything it does lives here so
//! integration tests can drive commands directly.

pub mod commands;
pub mod config;
pub mod manifest;

pub use config::PipelineConfig;
