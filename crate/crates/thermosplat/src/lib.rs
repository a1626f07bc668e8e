//! File formats, run-directory layout and the command-line front-end for
//! `thermosplat-core`.
//!
//! Everything on disk is in °C; kelvin stays inside the core crate.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod json;
pub mod pfm;
pub mod run_dir;
pub mod tables;

pub use error::{Error, Result};
