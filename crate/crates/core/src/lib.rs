//! Dynamic nighttime thermal-field reconstruction over an explicit Gaussian
//! scene.
//!
//! Every Gaussian carries a radiative temperature instead of a color. A
//! direct network maps (time, position) to temperature; a second set of
//! networks predicts emissivity, convective coefficient and heat capacity,
//! and temperatures at arbitrary times come from integrating the resulting
//! cooling law. The crate is `no_std` (with `alloc`); file formats and the
//! command-line front-end live in the `thermosplat` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod image;
pub mod loss;
pub mod math;
pub mod nn;
pub mod par;
pub mod render;
pub mod scene;
pub mod synth;
pub mod thermo;
pub mod train;

pub use error::{Error, ErrorKind, Result};
