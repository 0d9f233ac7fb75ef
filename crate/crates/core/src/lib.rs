//! Reciprocal-space field solver for nonlinear, dispersive magnetodielectric
//! media.
//!
//! The pipeline runs coupling tensors ([`medium`]) → susceptibility kernels
//! ([`susceptibility`]) → noise sources ([`noise`]) → fixed-point field
//! iteration ([`solver`]) → time-domain reconstruction ([`fields`]). The
//! oscillator-bath integrator in [`bath`] is an independent check of the
//! first-order bath solutions.

pub mod bath;
pub mod config;
pub mod error;
pub mod fields;
pub mod grids;
pub mod io;
pub mod linalg;
pub mod medium;
pub mod noise;
mod par;
pub mod pipeline;
pub mod solver;
pub mod spectra;
pub mod susceptibility;
pub mod units;

pub use error::{Error, Result};

/// Size the global worker pool; must run before any parallel work.
#[cfg(feature = "parallel")]
pub fn set_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}
