//! Angle-division multiple access (ADMA) channel estimation for massive-MIMO
//! uplink and downlink training.
//!
//! The pipeline has three stages:
//!
//! 1. **Preamble**: users are trained in blocks of `tau` orthogonal pilots, the
//!    base station forms least-squares channel estimates and searches each
//!    user's spatial signature (a rotation phase plus `tau` contiguous DFT bins).
//!    Users are then sorted by signature centre and grouped so that users with
//!    non-overlapping, guard-separated signatures share a pilot.
//! 2. **Uplink training**: every group transmits one pilot; the estimator
//!    separates users in the DFT domain and recovers each channel from its
//!    signature window.
//! 3. **Downlink training**: signatures are mapped to the downlink wavelength,
//!    identical signatures are clustered and the clusters grouped again.
//!
//! Every stage can run in double-precision floating point or in bit-accurate
//! `fixed[1,p,q]` arithmetic (see [`fixedpoint`]). The [`harness`] module holds
//! the Monte-Carlo sweeps, the analytic latency/resource model and the CLI.

pub mod error;
pub mod estimation;
pub mod fixedpoint;
pub mod grouping;
pub mod harness;
pub mod model;
pub mod rng;
pub mod signature;
pub mod spectral;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
