//! Batch runner: one subcommand per pipeline stage, artifacts on disk, a
//! digest manifest, and plot-ready CSV exports.

pub mod app;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod plot;
pub mod stages;
