//! Pseudo-spectral solver for the three-dimensional Euler vorticity equation
//! with Stratonovich transport noise on the periodic torus.

pub mod calibration;
pub mod diagnostics;
pub mod error;
mod fft;
pub mod field;
pub mod lagrangian;
pub mod noise;
pub mod operators;
pub mod rng;
pub mod stepper;
pub mod verify;

pub use error::{Error, Result};

/// Library version recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[cfg(test)]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
