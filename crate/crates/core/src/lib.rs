//! Joint radar-communication precoder design for a MIMO base station, and a
//! Monte Carlo evaluation of how well an internal adversary can localize the
//! radar target from noisy copies of the transmitted precoder.
//!
//! Modules, bottom-up:
//! - [`numerics`]: complex dense algebra, PSD square root, real embedding.
//! - [`scene`]: geometry, steering vectors, Rayleigh channels, the search grid.
//! - [`precoder`]: relaxed beampattern design with SINR constraints.
//! - [`adversary`]: beampattern reconstruction and the grid particle filter.
//! - [`harness`]: configuration, seeded Monte Carlo driver and result files.

// reference BLAS/LAPACK for the conic solver's dense PSD kernels, see .cargo/config.toml
extern crate netlib_src;

pub mod adversary;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod precoder;
pub mod rng;
pub mod scene;

pub use error::{Error, Result};
