//! Localized trigonometric kernel methods for spectral estimation.
//!
//! The crate recovers frequencies and amplitudes of exponential sums from
//! noisy moments (`unirec`, `multirec`), compares against classical subspace
//! methods (`baselines`), and separates superposed linear chirps with a
//! snippet-wise signal separation operator (`chirpsep`).

pub mod error;
pub mod filters;
pub mod linalg;
pub mod multirec;
pub mod baselines;
pub mod chirpsep;
pub mod experiments;
pub mod io;
pub mod plots;
pub mod datasets;
mod quad;
pub mod spectral;
pub mod synth;
pub mod unirec;

pub use error::{Error, Result};
pub use filters::{KernelConfig, LowPassFilter};
pub use num_complex::Complex64;
pub use spectral::PowerSpectrum;
