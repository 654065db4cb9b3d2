//! Spectral simulation of the incompressible plasma-vacuum interface
//! problem in the periodic slab T² × (−1, 1).
//!
//! The plasma occupies −1 < x₃ < f(t, x′), the vacuum f < x₃ < 1.  The
//! interface is evolved through its height f and scaled normal velocity
//! θ; vorticity and current are transported on a fixed reference strip,
//! and velocity, magnetic field, vacuum field and pressure are recovered
//! from them by div-curl and Poisson solves at every stage.

pub mod chebyshev;
pub mod diagnostics;
pub mod divcurl;
pub mod dynamics;
pub mod elliptic;
pub mod error;
mod fft;
pub mod geometry;
pub mod iteration;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
